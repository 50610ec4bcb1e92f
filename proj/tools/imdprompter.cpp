// imdprompter CLI: train / eval / predict / sweep / make-synthetic / plot.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 checkpoint error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "imdp/checkpoint.hpp"
#include "imdp/image_io.hpp"
#include "imdp/pipeline.hpp"
#include "imdp/svg_plot.hpp"

namespace fs = std::filesystem;
using namespace imdp;

namespace {

int log_level() {
    const char* env = std::getenv("IMDP_LOG_LEVEL");
    if (!env) return 1;
    std::string v(env);
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
}

void info(const std::string& msg) {
    if (log_level() >= 1) std::cout << msg << "\n";
}

struct CommonFlags {
    std::string config_path;
    std::string data_root;
    std::string out_dir = ".";
    std::string checkpoint_path;
    std::string device = "cpu";
    std::int64_t seed = -1;
    int image_size = 0;
};

Config resolve_config(const CommonFlags& flags) {
    Config cfg;
    if (!flags.config_path.empty()) cfg = load_config(flags.config_path);
    if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
    if (flags.image_size > 0) cfg.image_size = flags.image_size;
    check_or<ConfigError>(flags.device == "cpu", "only --device cpu is supported");
    validate_config(cfg);
    return cfg;
}

std::string sweep_csv_header() {
    return "kind,level," + metrics::report_csv_header();
}

void write_sweep_outputs(const std::vector<pipeline::SweepRow>& rows, const std::string& out_dir) {
    std::ofstream csv(out_dir + "/sweep.csv");
    check_or<DataError>(csv.good(), "cannot write sweep.csv");
    csv << sweep_csv_header() << "\n";
    for (const auto& row : rows) {
        csv << (row.spec.kind == dataio::DegradationSpec::Kind::Jpeg ? "jpeg" : "blur") << ","
            << row.spec.level << "," << metrics::report_csv_row(row.report) << "\n";
    }

    auto emit_plot = [&](dataio::DegradationSpec::Kind kind, const std::string& path,
                         const std::string& title, const std::string& x_label) {
        std::vector<double> xs;
        plot::Series pf1{"P-F1", {}}, if1{"I-F1", {}}, cf1{"Com-F1", {}};
        for (const auto& row : rows) {
            if (row.spec.kind != kind) continue;
            xs.push_back(row.spec.level);
            pf1.ys.push_back(row.report.p_f1_fixed.value_or(0.0));
            if1.ys.push_back(row.report.i_f1.value_or(0.0));
            cf1.ys.push_back(row.report.com_f1.value_or(0.0));
        }
        plot::write_line_plot_svg(path, title, x_label, xs, {pf1, if1, cf1});
    };
    emit_plot(dataio::DegradationSpec::Kind::Jpeg, out_dir + "/sweep_jpeg.svg",
              "JPEG compression", "quality");
    emit_plot(dataio::DegradationSpec::Kind::Blur, out_dir + "/sweep_blur.svg", "Gaussian blur",
              "kernel size");
}

int cmd_train(const CommonFlags& flags) {
    Config cfg = resolve_config(flags);
    std::vector<ImageSample> dataset = dataio::load_dataset(flags.data_root);
    fs::create_directories(flags.out_dir);

    Model model(cfg);
    pipeline::Trainer trainer(model, cfg);

    std::ofstream log(flags.out_dir + "/training_log.csv");
    check_or<DataError>(log.good(), "cannot write training log");
    log.precision(17);
    log << "step,seg_sam,seg_p,cpc,img_level,total\n";
    trainer.run(dataset, [&](int step, const LossBreakdown& loss) {
        log << step << "," << loss.seg_sam << "," << loss.seg_p << "," << loss.cpc << ","
            << loss.img_level << "," << loss.total << "\n";
        if (log_level() >= 2 || (log_level() >= 1 && step % 50 == 0)) {
            std::ostringstream os;
            os << "step " << step << " total " << loss.total;
            info(os.str());
        }
    });

    std::ofstream stats(flags.out_dir + "/ops_stats.csv");
    stats << trainer.stats().to_csv();
    checkpoint::save(model, flags.out_dir + "/checkpoint.imdp");
    info("checkpoint written to " + flags.out_dir + "/checkpoint.imdp");
    return 0;
}

int cmd_eval(const CommonFlags& flags) {
    checkpoint::Loaded loaded = checkpoint::load(flags.checkpoint_path);
    std::vector<ImageSample> dataset = dataio::load_dataset(flags.data_root);
    metrics::MetricsReport report =
        pipeline::evaluate(*loaded.model, dataset, fs::path(flags.data_root).filename());
    fs::create_directories(flags.out_dir);
    std::ofstream csv(flags.out_dir + "/metrics.csv");
    csv << metrics::report_csv_header() << "\n" << metrics::report_csv_row(report) << "\n";
    std::cout << metrics::report_table({report});
    return 0;
}

int cmd_predict(const CommonFlags& flags, const std::string& image_path) {
    checkpoint::Loaded loaded = checkpoint::load(flags.checkpoint_path);
    io::ImageU8 png = io::read_png(image_path);
    // Storage channel order is BGR.
    Tensor img({png.h, png.w, 3});
    for (int y = 0; y < png.h; ++y)
        for (int x = 0; x < png.w; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = png.at(y, x, 2 - c);

    pipeline::Prediction pred = pipeline::infer(*loaded.model, img);
    fs::create_directories(flags.out_dir);
    std::string stem = fs::path(image_path).stem();

    std::vector<std::uint8_t> gray(static_cast<std::size_t>(pred.orig_h) * pred.orig_w);
    for (int y = 0; y < pred.orig_h; ++y)
        for (int x = 0; x < pred.orig_w; ++x)
            gray[static_cast<std::size_t>(y) * pred.orig_w + x] =
                static_cast<std::uint8_t>(std::lround(pred.p_sam.at(y, x) * 255.0));
    io::write_png_gray(flags.out_dir + "/" + stem + "_mask.png", pred.orig_h, pred.orig_w, gray);

    nlohmann::json j;
    j["score"] = pred.score;
    j["label"] = pred.score >= 0.5 ? 1 : 0;
    j["chosen_view"] = to_string(pred.chosen);
    std::ofstream js(flags.out_dir + "/" + stem + ".json");
    js << j.dump(2) << "\n";
    info("wrote " + stem + "_mask.png and " + stem + ".json");
    return 0;
}

int cmd_sweep(const CommonFlags& flags) {
    checkpoint::Loaded loaded = checkpoint::load(flags.checkpoint_path);
    std::vector<ImageSample> dataset = dataio::load_dataset(flags.data_root);
    fs::create_directories(flags.out_dir);
    std::vector<pipeline::SweepRow> rows = pipeline::robustness_sweep(*loaded.model, dataset);
    write_sweep_outputs(rows, flags.out_dir);
    info("sweep.csv and plots written to " + flags.out_dir);
    return 0;
}

int cmd_make_synthetic(const CommonFlags& flags, const std::string& authentic_dir, int n) {
    std::vector<ImageSample> pool;
    std::vector<fs::path> files;
    check_or<DataError>(fs::is_directory(authentic_dir),
                        "authentic dir not found: " + authentic_dir);
    for (const auto& entry : fs::directory_iterator(authentic_dir))
        if (entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        io::ImageU8 png = io::read_png(f.string());
        Tensor img({png.h, png.w, 3});
        for (int y = 0; y < png.h; ++y)
            for (int x = 0; x < png.w; ++x)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = png.at(y, x, 2 - c);
        pool.emplace_back(f.stem().string(), std::move(img), std::nullopt, 0);
    }
    check_or<DataError>(pool.size() >= 2, "need at least 2 authentic PNG images");

    std::uint64_t seed = flags.seed >= 0 ? static_cast<std::uint64_t>(flags.seed) : 0;
    dataio::SyntheticDataset synth = dataio::make_synthetic(pool, n, seed);
    dataio::write_dataset(flags.out_dir, synth.samples, synth.kinds);
    info("wrote " + std::to_string(synth.samples.size()) + " samples to " + flags.out_dir);
    return 0;
}

int cmd_plot(const CommonFlags& flags, const std::string& sweep_csv) {
    std::ifstream in(sweep_csv);
    check_or<DataError>(in.good(), "cannot open sweep csv: " + sweep_csv);
    std::string line;
    check_or<DataError>(static_cast<bool>(std::getline(in, line)) && line == sweep_csv_header(),
                        "unexpected sweep csv header");
    std::vector<pipeline::SweepRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto c1 = line.find(',');
        auto c2 = line.find(',', c1 + 1);
        check_or<DataError>(c1 != std::string::npos && c2 != std::string::npos,
                            "malformed sweep row: " + line);
        pipeline::SweepRow row;
        std::string kind = line.substr(0, c1);
        int level = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
        row.spec = kind == "jpeg" ? dataio::DegradationSpec::jpeg(level)
                                  : dataio::DegradationSpec::blur(level);
        row.report = metrics::report_from_csv_row(line.substr(c2 + 1));
        rows.push_back(std::move(row));
    }
    fs::create_directories(flags.out_dir);
    write_sweep_outputs(rows, flags.out_dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IMDPrompter: cross-view prompt learning for image manipulation detection"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string image_path, authentic_dir, sweep_csv;
    int n_synthetic = 8;

    auto add_common = [&](CLI::App* sub, bool data, bool ckpt) {
        sub->add_option("--out", flags.out_dir, "output directory");
        sub->add_option("--seed", flags.seed, "override the config seed");
        sub->add_option("--image-size", flags.image_size, "override the config image size");
        sub->add_option("--device", flags.device, "compute device (cpu)");
        if (data) sub->add_option("--data-root", flags.data_root, "dataset root")->required();
        if (ckpt)
            sub->add_option("--checkpoint", flags.checkpoint_path, "checkpoint file")->required();
    };

    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", flags.config_path, "config file (key = value lines)");
    add_common(train, true, false);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    add_common(eval, true, true);

    CLI::App* predict = app.add_subcommand("predict", "run inference on one image");
    predict->add_option("--image", image_path, "input PNG")->required();
    add_common(predict, false, true);

    CLI::App* sweep = app.add_subcommand("sweep", "JPEG/blur robustness sweep");
    add_common(sweep, true, true);

    CLI::App* synth = app.add_subcommand("make-synthetic", "build a synthetic tamper dataset");
    synth->add_option("--authentic-dir", authentic_dir, "directory of authentic PNGs")
        ->required();
    synth->add_option("--n", n_synthetic, "number of tampered samples");
    add_common(synth, false, false);

    CLI::App* plot_cmd = app.add_subcommand("plot", "regenerate sweep plots from sweep.csv");
    plot_cmd->add_option("--sweep-csv", sweep_csv, "sweep.csv path")->required();
    add_common(plot_cmd, false, false);

    try {
        app.parse(argc, argv);
        if (app.got_subcommand(train)) return cmd_train(flags);
        if (app.got_subcommand(eval)) return cmd_eval(flags);
        if (app.got_subcommand(predict)) return cmd_predict(flags, image_path);
        if (app.got_subcommand(sweep)) return cmd_sweep(flags);
        if (app.got_subcommand(synth)) return cmd_make_synthetic(flags, authentic_dir, n_synthetic);
        if (app.got_subcommand(plot_cmd)) return cmd_plot(flags, sweep_csv);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage problems are configuration errors
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
