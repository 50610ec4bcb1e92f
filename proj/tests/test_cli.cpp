#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "imdp/checkpoint.hpp"
#include "imdp/dataio.hpp"
#include "imdp/image_io.hpp"
#include "imdp/metrics.hpp"
#include "imdp/pipeline.hpp"

using namespace imdp;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    std::string cmd = std::string(IMDP_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 256> buf{};
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("imdp_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

void write_tiny_config(const std::string& path, int max_steps = 6) {
    std::ofstream cfg(path);
    cfg << "image_size = 16\n"
        << "branch_stem = 4\nbranch_mid = 6\nbranch_feat = 8\n"
        << "encoder_channels = 16\nprompt_dim = 16\nnoiseprint_hidden = 4\n"
        << "batch_size = 4\nepochs = 16\nmax_steps = " << max_steps << "\n"
        << "augment = false\nseed = 3\n";
}

std::string make_fixture(const TempDir& dir, int n = 2) {
    std::vector<ImageSample> pool;
    Rng gen = RngFactory(50).stream("cli_fixture");
    for (int i = 0; i < 3; ++i)
        pool.push_back(dataio::generate_authentic(gen, 16, 16, "a" + std::to_string(i)));
    dataio::SyntheticDataset ds = dataio::make_synthetic(pool, n, 50);
    std::string root = dir.str("data");
    dataio::write_dataset(root, ds.samples, ds.kinds);
    return root;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// One trained checkpoint + fixture shared by the read-only command tests.
struct Trained {
    TempDir dir;
    std::string data_root, ckpt, config;
    Trained() {
        config = dir.str("cfg.txt");
        write_tiny_config(config);
        data_root = make_fixture(dir);
        RunResult r = run_cli("train --config " + config + " --data-root " + data_root +
                              " --out " + dir.str("run"));
        REQUIRE(r.code == 0);
        ckpt = dir.str("run/checkpoint.imdp");
        REQUIRE(fs::exists(ckpt));
    }
};

Trained& trained() {
    static Trained t;
    return t;
}

}  // namespace

TEST_CASE("train: tiny fixture exits 0 and writes checkpoint plus logs") {
    Trained& t = trained();
    CHECK(fs::exists(t.ckpt));
    CHECK(fs::exists(t.dir.str("run/training_log.csv")));
    CHECK(fs::exists(t.dir.str("run/ops_stats.csv")));
    std::string log = slurp(t.dir.str("run/training_log.csv"));
    CHECK(log.rfind("step,seg_sam,seg_p,cpc,img_level,total", 0) == 0);
    // 6 steps + header.
    CHECK(std::count(log.begin(), log.end(), '\n') == 7);
    std::string stats = slurp(t.dir.str("run/ops_stats.csv"));
    CHECK(stats.rfind("view_id,count,proportion", 0) == 0);
}

TEST_CASE("train: missing data root exits 3 with a message") {
    TempDir dir;
    std::string cfg = dir.str("c.txt");
    write_tiny_config(cfg);
    RunResult r = run_cli("train --config " + cfg + " --data-root " + dir.str("nope") +
                          " --out " + dir.str("o"));
    CHECK(r.code == 3);
    CHECK(r.out.find("data error") != std::string::npos);
}

TEST_CASE("train: bad config exits 2") {
    TempDir dir;
    std::ofstream cfg(dir.str("bad.txt"));
    cfg << "image_size = 30\n";  // not a multiple of 8
    cfg.close();
    RunResult r = run_cli("train --config " + dir.str("bad.txt") + " --data-root x --out y");
    CHECK(r.code == 2);

    std::ofstream cfg2(dir.str("bad2.txt"));
    cfg2 << "imge_size = 32\n";  // typo key
    cfg2.close();
    RunResult r2 = run_cli("train --config " + dir.str("bad2.txt") + " --data-root x --out y");
    CHECK(r2.code == 2);
    CHECK(r2.out.find("unknown config key") != std::string::npos);
}

TEST_CASE("train twice with the same seed: identical loss CSVs") {
    TempDir dir;
    std::string cfg = dir.str("c.txt");
    write_tiny_config(cfg, 4);
    std::string root = make_fixture(dir);
    RunResult a = run_cli("train --config " + cfg + " --data-root " + root + " --seed 7 --out " +
                          dir.str("r1"));
    RunResult b = run_cli("train --config " + cfg + " --data-root " + root + " --seed 7 --out " +
                          dir.str("r2"));
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(slurp(dir.str("r1/training_log.csv")) == slurp(dir.str("r2/training_log.csv")));
    CHECK(slurp(dir.str("r1/checkpoint.imdp")) == slurp(dir.str("r2/checkpoint.imdp")));
}

TEST_CASE("eval: writes a parseable CSV that round trips") {
    Trained& t = trained();
    RunResult r = run_cli("eval --checkpoint " + t.ckpt + " --data-root " + t.data_root +
                          " --out " + t.dir.str("eval"));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("dataset") != std::string::npos);  // table on stdout

    std::string csv = slurp(t.dir.str("eval/metrics.csv"));
    auto nl = csv.find('\n');
    REQUIRE(nl != std::string::npos);
    CHECK(csv.substr(0, nl) == metrics::report_csv_header());
    std::string row = csv.substr(nl + 1, csv.find('\n', nl + 1) - nl - 1);
    metrics::MetricsReport parsed = metrics::report_from_csv_row(row);

    // Round-trip oracle: the parsed report equals a library evaluation.
    checkpoint::Loaded loaded = checkpoint::load(t.ckpt);
    std::vector<ImageSample> data = dataio::load_dataset(t.data_root);
    metrics::MetricsReport direct =
        pipeline::evaluate(*loaded.model, data, fs::path(t.data_root).filename());
    CHECK(parsed == direct);
}

TEST_CASE("eval: checkpoint/data errors use exit codes 4 and 3") {
    Trained& t = trained();
    TempDir dir;
    std::ofstream junk(dir.str("junk.imdp"), std::ios::binary);
    junk << "garbage";
    junk.close();
    CHECK(run_cli("eval --checkpoint " + dir.str("junk.imdp") + " --data-root " + t.data_root +
                  " --out " + dir.str("e"))
              .code == 4);
    CHECK(run_cli("eval --checkpoint " + t.ckpt + " --data-root " + dir.str("missing") +
                  " --out " + dir.str("e"))
              .code == 3);
}

TEST_CASE("predict: writes mask PNG + JSON; quantization within half a step") {
    Trained& t = trained();
    std::string img_path = t.data_root + "/images/tampered_0000.png";
    RunResult r =
        run_cli("predict --checkpoint " + t.ckpt + " --image " + img_path + " --out " +
                t.dir.str("pred"));
    REQUIRE(r.code == 0);
    std::string mask_path = t.dir.str("pred/tampered_0000_mask.png");
    std::string json_path = t.dir.str("pred/tampered_0000.json");
    REQUIRE(fs::exists(mask_path));
    REQUIRE(fs::exists(json_path));

    // JSON label contract.
    std::string js = slurp(json_path);
    bool has_label1 = js.find("\"label\": 1") != std::string::npos;
    bool has_label0 = js.find("\"label\": 0") != std::string::npos;
    CHECK((has_label0 || has_label1));
    auto score_pos = js.find("\"score\": ");
    REQUIRE(score_pos != std::string::npos);
    double score = std::stod(js.substr(score_pos + 9));
    CHECK(has_label1 == (score >= 0.5));

    // Quantization oracle: PNG byte k satisfies |k/255 - p| <= 1/510.
    checkpoint::Loaded loaded = checkpoint::load(t.ckpt);
    std::vector<ImageSample> data = dataio::load_dataset(t.data_root);
    const ImageSample* sample = nullptr;
    for (const auto& s : data)
        if (s.id() == "tampered_0000") sample = &s;
    REQUIRE(sample != nullptr);
    pipeline::Prediction pred = pipeline::infer(*loaded.model, sample->image());
    int h = 0, w = 0;
    auto gray = io::read_png_gray(mask_path, h, w);
    REQUIRE(h == 16);
    REQUIRE(w == 16);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double k = gray[static_cast<std::size_t>(y) * w + x] / 255.0;
            CHECK(std::abs(k - pred.p_sam.at(y, x)) <= 1.0 / 510.0 + 1e-12);
        }
}

TEST_CASE("predict: unreadable image exits 3") {
    Trained& t = trained();
    RunResult r = run_cli("predict --checkpoint " + t.ckpt + " --image /nonexistent.png --out /tmp");
    CHECK(r.code == 3);
}

TEST_CASE("sweep: 12 rows, two plots, identity row matches eval, rerun identical") {
    Trained& t = trained();
    RunResult r = run_cli("sweep --checkpoint " + t.ckpt + " --data-root " + t.data_root +
                          " --out " + t.dir.str("sweep"));
    REQUIRE(r.code == 0);
    std::string csv = slurp(t.dir.str("sweep/sweep.csv"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);  // header + 12 rows
    CHECK(fs::exists(t.dir.str("sweep/sweep_jpeg.svg")));
    CHECK(fs::exists(t.dir.str("sweep/sweep_blur.svg")));

    // jpeg_100 row equals the undegraded eval, numbers bit-for-bit.
    std::istringstream rows(csv);
    std::string line;
    std::getline(rows, line);  // header
    std::getline(rows, line);  // jpeg,100,...
    CHECK(line.rfind("jpeg,100,", 0) == 0);
    metrics::MetricsReport row =
        metrics::report_from_csv_row(line.substr(std::string("jpeg,100,").size()));
    checkpoint::Loaded loaded = checkpoint::load(t.ckpt);
    std::vector<ImageSample> data = dataio::load_dataset(t.data_root);
    metrics::MetricsReport direct = pipeline::evaluate(*loaded.model, data, "jpeg_100");
    CHECK(row.auc == direct.auc);
    CHECK(row.p_f1_fixed == direct.p_f1_fixed);
    CHECK(row.p_f1_best == direct.p_f1_best);
    CHECK(row.i_f1 == direct.i_f1);
    CHECK(row.com_f1 == direct.com_f1);

    RunResult again = run_cli("sweep --checkpoint " + t.ckpt + " --data-root " + t.data_root +
                              " --out " + t.dir.str("sweep2"));
    REQUIRE(again.code == 0);
    CHECK(slurp(t.dir.str("sweep2/sweep.csv")) == csv);
}

TEST_CASE("plot: regenerates SVGs from a sweep CSV") {
    Trained& t = trained();
    REQUIRE(fs::exists(t.dir.str("sweep/sweep.csv")));
    RunResult r = run_cli("plot --sweep-csv " + t.dir.str("sweep/sweep.csv") + " --out " +
                          t.dir.str("replot"));
    REQUIRE(r.code == 0);
    CHECK(fs::exists(t.dir.str("replot/sweep_jpeg.svg")));
    CHECK(fs::exists(t.dir.str("replot/sweep_blur.svg")));
    CHECK(slurp(t.dir.str("replot/sweep_jpeg.svg")) == slurp(t.dir.str("sweep/sweep_jpeg.svg")));
}

TEST_CASE("make-synthetic: n=8 gives 16 samples, loadable, seed-stable") {
    TempDir dir;
    // Authentic pool on disk.
    fs::create_directories(dir.str("auth"));
    Rng gen = RngFactory(60).stream("cli_auth");
    for (int i = 0; i < 3; ++i) {
        ImageSample a = dataio::generate_authentic(gen, 16, 16, "img" + std::to_string(i));
        io::write_png(dir.str("auth/img" + std::to_string(i) + ".png"), io::to_u8(a.image()));
    }
    RunResult r = run_cli("make-synthetic --authentic-dir " + dir.str("auth") +
                          " --n 8 --seed 1 --out " + dir.str("ds1"));
    REQUIRE(r.code == 0);
    std::string labels = slurp(dir.str("ds1/labels.csv"));
    CHECK(std::count(labels.begin(), labels.end(), '\n') == 17);  // header + 16 rows
    std::vector<ImageSample> loaded = dataio::load_dataset(dir.str("ds1"));
    CHECK(loaded.size() == 16);
    int n_pos = 0;
    for (const auto& s : loaded) n_pos += s.label_unchecked();
    CHECK(n_pos == 8);

    RunResult r2 = run_cli("make-synthetic --authentic-dir " + dir.str("auth") +
                           " --n 8 --seed 1 --out " + dir.str("ds2"));
    REQUIRE(r2.code == 0);
    CHECK(slurp(dir.str("ds1/labels.csv")) == slurp(dir.str("ds2/labels.csv")));
    CHECK(slurp(dir.str("ds1/images/tampered_0003.png")) ==
          slurp(dir.str("ds2/images/tampered_0003.png")));
    CHECK(slurp(dir.str("ds1/masks/tampered_0003.png")) ==
          slurp(dir.str("ds2/masks/tampered_0003.png")));
}

TEST_CASE("make-synthetic: fewer than 2 authentic images exits 3") {
    TempDir dir;
    fs::create_directories(dir.str("one"));
    Rng gen = RngFactory(61).stream("one");
    ImageSample a = dataio::generate_authentic(gen, 16, 16, "only");
    io::write_png(dir.str("one/only.png"), io::to_u8(a.image()));
    RunResult r =
        run_cli("make-synthetic --authentic-dir " + dir.str("one") + " --n 4 --out " + dir.str("d"));
    CHECK(r.code == 3);
}

TEST_CASE("unknown flags exit 2") {
    CHECK(run_cli("train --bogus-flag 1").code == 2);
    CHECK(run_cli("frobnicate").code == 2);
}
