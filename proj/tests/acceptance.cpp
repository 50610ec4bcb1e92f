// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits nonzero on any failure.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "imdp/checkpoint.hpp"
#include "imdp/pipeline.hpp"
#include "oracles.hpp"

using namespace imdp;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
};

std::vector<Criterion> g_results;

void report(const std::string& name, bool pass, const std::string& detail) {
    g_results.push_back({name, pass, detail});
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << " - " << detail << std::endl;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void criterion_metric_reproduction() {
    struct Case {
        double a, b, expect;
        const char* what;
    };
    std::array<Case, 4> cases{{{77.3, 76.3, 76.8, "Com-F1 CASIA"},
                               {75.8, 45.2, 56.6, "Com-F1 MVSS CASIA"},
                               {91.6, 66.9, 77.3, "I-F1 CASIA"},
                               {96.8, 55.2, 70.3, "I-F1 COVER"}}};
    bool ok = true;
    std::ostringstream os;
    for (const Case& c : cases) {
        double got = metrics::composite_f1(c.a, c.b);
        bool hit = std::abs(got - c.expect) <= 0.05;
        ok = ok && hit;
        os << c.what << "=" << got << (hit ? " " : "(off) ");
    }
    report("metric-reproduction", ok, os.str());
}

void criterion_otsu_oracle() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng = RngFactory(1001).stream("acc_otsu");
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        int n = static_cast<int>(rng.uniform_int(1, 256));
        Tensor p({1, n});
        std::vector<double> vals(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            double v = rng.uniform(0.0, 1.0);
            p[static_cast<std::size_t>(i)] = v;
            vals[static_cast<std::size_t>(i)] = v;
        }
        oracles::OtsuResult expect = oracles::otsu_brute_force(vals);
        double omega = losses::otsu_threshold(p);
        // Exact threshold equality, and exact objective equality through the
        // oracle's evaluator (one arithmetic path for both numbers).
        double objective = oracles::otsu_objective_direct(vals, omega);
        if (omega != expect.omega || objective != expect.objective) ++mismatches;
    }
    std::ostringstream os;
    os << "1000 maps, " << mismatches << " mismatches, " << elapsed_s(t0) << "s";
    report("otsu-oracle", mismatches == 0 && elapsed_s(t0) < 10.0, os.str());
}

void criterion_ops_oracle() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng = RngFactory(1002).stream("acc_ops");
    losses::FocalParams fp;
    int mismatches = 0;
    for (int trial = 0; trial < 500; ++trial) {
        int side = static_cast<int>(rng.uniform_int(4, 20));
        Tensor gt({side, side});
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;

        auto rand_map = [&](bool clone_of_first, const Tensor* first) {
            Tensor t({side, side});
            if (clone_of_first && first) return *first;
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.001, 0.999);
            return t;
        };
        // Every 10th trial forces exact ties between the first two views.
        bool tie_case = trial % 10 == 0;
        Tensor m0 = rand_map(false, nullptr);
        Tensor m1 = rand_map(tie_case, &m0);
        Tensor m2 = rand_map(false, nullptr);
        Tensor m3 = rand_map(false, nullptr);
        prompting::PromptCandidateSet set = prompting::make_candidates(
            ProbabilityMap(m0), ProbabilityMap(m1), ProbabilityMap(m2), ProbabilityMap(m3));
        prompting::Selection sel = prompting::select_optimal(set, gt, fp);

        int best = 0;
        double best_loss = 1e300;
        for (int i = 0; i < 5; ++i) {
            double loss =
                losses::focal_seg_value(set.maps[static_cast<std::size_t>(i)].values(), gt, fp);
            if (loss < best_loss) {  // fixed-order tie break: strict less-than
                best_loss = loss;
                best = i;
            }
        }
        if (sel.chosen != kViewOrder[best]) ++mismatches;
        if (tie_case && set.losses[0] == set.losses[1] && sel.chosen == ViewId::SRM) ++mismatches;
    }
    std::ostringstream os;
    os << "500 candidate sets, " << mismatches << " mismatches, " << elapsed_s(t0) << "s";
    report("ops-oracle", mismatches == 0 && elapsed_s(t0) < 10.0, os.str());
}

void criterion_srm_property() {
    Rng rng = RngFactory(1003).stream("acc_srm");
    double worst_const = 0.0, worst_lin = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        Tensor img({16, 16, 3}, rng.uniform(0.0, 255.0));
        Tensor out = noise::srm_extract(img);
        worst_const = std::max(worst_const, std::max(std::abs(out.max()), std::abs(out.min())));
    }
    for (int trial = 0; trial < 20; ++trial) {
        Tensor img = oracles::random_tensor({12, 12, 3}, rng, 0.0, 255.0);
        double a = rng.uniform(0.5, 3.0);
        Tensor scaled = img;
        scaled *= a;
        Tensor ra = noise::srm_extract(img);
        Tensor rb = noise::srm_extract(scaled);
        for (std::size_t i = 0; i < ra.size(); ++i) {
            double denom = std::max(std::abs(a * ra[i]), 1.0);
            worst_lin = std::max(worst_lin, std::abs(rb[i] - a * ra[i]) / denom);
        }
    }
    std::ostringstream os;
    os << "max|const response|=" << worst_const << " max rel lin err=" << worst_lin;
    report("srm-property", worst_const < 1e-6 && worst_lin < 1e-6, os.str());
}

void criterion_cpc_contract() {
    losses::FocalParams fp;
    // Consensus inputs at the clamp limits.
    Tensor hot({8, 8});
    for (int i = 0; i < 8; ++i) hot.at(i / 2 + 2, i % 4 + 2) = 1.0;
    Tensor consensus(hot.shape());
    for (std::size_t i = 0; i < hot.size(); ++i)
        consensus[i] = hot[i] == 1.0 ? 1.0 - fp.clamp_eps : fp.clamp_eps;
    ProbabilityMap p(consensus);
    double consensus_loss =
        prompting::cpc_loss({&p, &p, &p, &p}, p, Tensor(), fp).value()[0];

    // Detach tripwire: gradient through the target path is exactly zero.
    Rng rng = RngFactory(1004).stream("acc_cpc");
    ad::Var branch = ad::Var::param(oracles::random_tensor({8, 8}, rng, 0.01, 0.99));
    ProbabilityMap p_opt(branch);
    ProbabilityMap other(ad::Var::constant(oracles::random_tensor({8, 8}, rng, 0.01, 0.99)));
    branch.zero_grad();
    prompting::cpc_loss({&p_opt, &other, &other, &other}, p_opt, Tensor(), fp).backward();
    Tensor grad_full = branch.grad_or_zero();

    Tensor hard(p_opt.values().shape());
    for (std::size_t i = 0; i < hard.size(); ++i)
        hard[i] = p_opt.values()[i] >= 0.5 ? 1.0 : 0.0;
    branch.zero_grad();
    ad::focal_loss_op(branch, hard, Tensor::full(hard.shape(), 1.0), fp.gamma, fp.alpha,
                      fp.clamp_eps)
        .backward();
    Tensor grad_pred = branch.grad_or_zero();
    double max_target_grad = 0.0;
    for (std::size_t i = 0; i < grad_full.size(); ++i)
        max_target_grad = std::max(max_target_grad, std::abs(grad_full[i] - grad_pred[i]));

    std::ostringstream os;
    os << "consensus loss=" << consensus_loss << " target-path grad=" << max_target_grad;
    report("cpc-contract", consensus_loss < 1e-4 && max_target_grad == 0.0, os.str());
}

void criterion_focal_degeneracy() {
    Rng rng = RngFactory(1005).stream("acc_focal");
    losses::FocalParams fp{0.0, 0.5, 1e-6};
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        int side = static_cast<int>(rng.uniform_int(2, 12));
        Tensor p({side, side}), gt({side, side});
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = rng.uniform(0.001, 0.999);
            gt[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        }
        double focal = losses::focal_seg_value(p, gt, fp);
        double bce = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            bce += gt[i] == 1.0 ? -std::log(p[i]) : -std::log(1.0 - p[i]);
        bce /= static_cast<double>(p.size());
        worst = std::max(worst, std::abs(focal - 0.5 * bce));
    }
    std::ostringstream os;
    os << "100 pairs, max |focal - 0.5*BCE| = " << worst;
    report("focal-degeneracy", worst < 1e-9, os.str());
}

void criterion_gradient_checks() {
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string worst_name = "-";
    auto track = [&](const std::string& name, double err) {
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    };

    {  // CFP on a sub-1k-parameter configuration
        Rng rng = RngFactory(1006).stream("acc_cfp");
        cfp::CfpFusion m(2, 4, rng);
        Tensor f_sam = oracles::random_tensor({4, 3, 3}, rng);
        Tensor v = oracles::random_tensor({2, 4, 4}, rng);
        auto fwd = [&] {
            return ad::mean_all(ad::gelu(
                m.fuse(FeatureMap(ad::Var::constant(f_sam)), FeatureMap(ad::Var::constant(v)),
                       FeatureMap(ad::Var::constant(v)), FeatureMap(ad::Var::constant(v)),
                       FeatureMap(ad::Var::constant(v)))
                    .var()));
        };
        nn::ParamList params;
        m.collect("cfp", params);
        for (auto& [name, var] : params) track(name, oracles::gradient_check(fwd, var));
    }
    {  // PMM
        Rng rng = RngFactory(1007).stream("acc_pmm");
        prompting::PromptMixer pmm(4, 8, rng);
        FeatureMap f_cfp(ad::Var::constant(oracles::random_tensor({4, 3, 3}, rng)));
        PromptEmbedding f_opt(ad::Var::constant(oracles::random_tensor({3, 8}, rng)));
        auto fwd = [&] { return ad::mean_all(ad::gelu(pmm.mix(f_cfp, f_opt).var())); };
        nn::ParamList params;
        pmm.collect("pmm", params);
        for (auto& [name, var] : params) track(name, oracles::gradient_check(fwd, var));
    }
    {  // Noiseprint surrogate
        Rng rng = RngFactory(1008).stream("acc_np");
        noise::NoiseprintSurrogate np(4, rng);
        Tensor img = oracles::random_tensor({3, 6, 6}, rng);
        auto fwd = [&] {
            return ad::mean_all(ad::gelu(np.forward(ad::Var::constant(img))));
        };
        nn::ParamList params;
        np.collect("np", params);
        for (auto& [name, var] : params) track(name, oracles::gradient_check(fwd, var));
    }
    {  // Decoder (with prompt encoder in the graph)
        foundation::FoundationSpec spec;
        spec.encoder_channels = 8;
        spec.prompt_dim = 8;
        Rng rng = RngFactory(1009).stream("acc_dec");
        foundation::FoundationModel fm(spec, rng);
        Tensor feats = oracles::random_tensor({8, 2, 2}, rng);
        BinaryMask mask(16, 16);
        mask.set(4, 4, true);
        mask.set(4, 5, true);
        std::vector<BoxPrompt> boxes{BoxPrompt(4, 4, 5, 4, 16, 16)};
        auto fwd = [&] {
            return ad::mean_all(fm.mask_decode(FeatureMap(ad::Var::constant(feats)),
                                               fm.prompt_encode(mask, boxes))
                                    .var());
        };
        nn::ParamList params;
        fm.collect_trainable("fm", params);
        for (auto& [name, var] : params) track(name, oracles::gradient_check(fwd, var));
    }
    std::ostringstream os;
    os << "worst rel err " << worst << " at " << worst_name << ", " << elapsed_s(t0) << "s";
    report("gradient-checks", worst < 1e-3 && elapsed_s(t0) < 120.0, os.str());
}

// ---------------------------------------------------------------------------
// Trained-model criteria share one overfit run.
// ---------------------------------------------------------------------------

struct OverfitRun {
    Config cfg;
    std::vector<ImageSample> fixture;
    std::unique_ptr<Model> model;
    std::vector<LossBreakdown> history;
    bool bayar_ok_at_100 = false;
    double p_f1 = 0.0, i_f1 = 0.0;
    int hit_step = -1;
    double train_seconds = 0.0;
};

OverfitRun run_overfit() {
    OverfitRun run;
    run.cfg.image_size = 64;
    run.cfg.seed = 7;
    run.cfg.augment = false;
    run.cfg.epochs = 150;  // cosine horizon 600 steps; the run stops at 500
    run.cfg.max_steps = 500;
    run.cfg.lr = 1e-3;
    // Desk-scale image-loss weight: at lambda3=1.0 the pooled-BCE gradient
    // (1/|cluster| per member) overwhelms the per-pixel focal gradient
    // (1/N per pixel) and floods the mask; 0.02 trains both heads stably
    // on a 64x64 fixture. The shipped defaults keep the published weights.
    run.cfg.lambda3 = 0.02;

    std::vector<ImageSample> pool;
    Rng gen = RngFactory(2024).stream("acc_pool");
    for (int i = 0; i < 4; ++i)
        pool.push_back(dataio::generate_authentic(gen, 64, 64, "a" + std::to_string(i)));
    dataio::SyntheticDataset ds = dataio::make_synthetic(pool, 8, 2024);
    run.fixture = ds.samples;

    run.model = std::make_unique<Model>(run.cfg);
    pipeline::Trainer trainer(*run.model, run.cfg);
    auto t0 = std::chrono::steady_clock::now();
    run.history = trainer.run(run.fixture, [&](int step, const LossBreakdown& loss) {
        if (step + 1 == 100) run.bayar_ok_at_100 = run.model->bayar().projected(1e-6);
        if ((step + 1) % 100 == 0)
            std::cerr << "  overfit step " << step + 1 << " total " << loss.total << "\n";
        if (run.hit_step < 0 && (step + 1) % 25 == 0) {
            metrics::MetricsReport r = pipeline::evaluate(*run.model, run.fixture, "train");
            if (r.p_f1_fixed && r.i_f1 && *r.p_f1_fixed >= 0.90 && *r.i_f1 >= 0.90)
                run.hit_step = step + 1;
        }
    });
    run.train_seconds = elapsed_s(t0);
    metrics::MetricsReport final_r = pipeline::evaluate(*run.model, run.fixture, "train");
    run.p_f1 = final_r.p_f1_fixed.value_or(0.0);
    run.i_f1 = final_r.i_f1.value_or(0.0);
    if (run.hit_step < 0 && run.p_f1 >= 0.90 && run.i_f1 >= 0.90) run.hit_step = 500;
    return run;
}

void criterion_bayar_constraint(const OverfitRun& run) {
    // Checked at step 100 of the fixture run and again at the end.
    const Tensor& w = run.model->bayar().weights().value();
    int ks = run.model->bayar().kernel_size();
    double worst_center = 0.0, worst_sum = 0.0;
    for (int k = 0; k < run.model->bayar().count(); ++k) {
        double center = 0.0, others = 0.0;
        for (int i = 0; i < ks; ++i)
            for (int j = 0; j < ks; ++j) {
                double v = w[(static_cast<std::size_t>(k) * ks + i) * ks + j];
                if (i == ks / 2 && j == ks / 2)
                    center = v;
                else
                    others += v;
            }
        worst_center = std::max(worst_center, std::abs(center + 1.0));
        worst_sum = std::max(worst_sum, std::abs(others - 1.0));
    }
    std::ostringstream os;
    os << "at step 100: " << (run.bayar_ok_at_100 ? "ok" : "violated")
       << "; final |center+1|=" << worst_center << " |sum-1|=" << worst_sum;
    report("bayar-constraint", run.bayar_ok_at_100 && worst_center < 1e-6 && worst_sum < 1e-6,
           os.str());
}

void criterion_overfit(const OverfitRun& run) {
    double first = run.history.front().total;
    double last = run.history.back().total;
    bool loss_ok = run.history.size() == 500 && last < 0.25 * first;
    bool f1_ok = run.hit_step > 0;
    std::ostringstream os;
    os << "P-F1=" << run.p_f1 << " I-F1=" << run.i_f1 << " (target hit at step " << run.hit_step
       << "); total " << first << " -> " << last << " (" << 100.0 * last / first << "%); "
       << run.train_seconds << "s train";
    report("end-to-end-overfit", loss_ok && f1_ok && run.train_seconds < 900.0, os.str());
}

void criterion_inference_purity(const OverfitRun& run) {
    // 100 probes: fresh synthetic samples, tripwired accessors.
    std::vector<ImageSample> probes;
    std::vector<ImageSample> pool;
    Rng gen = RngFactory(2025).stream("acc_probe");
    for (int i = 0; i < 3; ++i)
        pool.push_back(dataio::generate_authentic(gen, 64, 64, "p" + std::to_string(i)));
    dataio::SyntheticDataset ds = dataio::make_synthetic(pool, 50, 999);
    probes = ds.samples;  // 50 tampered + 50 authentic

    int trips = 0;
    ImageSample::set_access_hook([&](const ImageSample&, const char*) { ++trips; });
    int ens_count = 0;
    for (const ImageSample& s : probes) {
        pipeline::Prediction p = pipeline::infer(*run.model, s.image());
        if (p.chosen == ViewId::ENS) ++ens_count;
    }
    ImageSample::clear_access_hook();
    std::ostringstream os;
    os << trips << " tripwire hits, ENS chosen " << ens_count << "/" << probes.size();
    report("inference-purity", trips == 0 && ens_count == static_cast<int>(probes.size()),
           os.str());
}

void criterion_robustness_shape(const OverfitRun& run, const std::string& scratch) {
    // Exercised through the CLI surface: cmd_sweep vs cmd_eval outputs.
    fs::create_directories(scratch);
    std::string ckpt = scratch + "/model.imdp";
    checkpoint::save(*run.model, ckpt);
    std::vector<std::string> kinds;
    std::string root = scratch + "/data";
    dataio::SyntheticDataset ds;
    ds.samples = run.fixture;
    for (const ImageSample& s : run.fixture)
        ds.kinds.push_back(s.label_unchecked() ? "spli" : "auth");
    dataio::write_dataset(root, ds.samples, ds.kinds);

    auto shell = [&](const std::string& args) {
        std::string cmd = std::string(IMDP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    int rc1 = shell("sweep --checkpoint " + ckpt + " --data-root " + root + " --out " + scratch +
                    "/sweep");
    int rc2 = shell("eval --checkpoint " + ckpt + " --data-root " + root + " --out " + scratch +
                    "/eval");

    bool ok = rc1 == 0 && rc2 == 0;
    std::string detail;
    if (ok) {
        std::ifstream csv(scratch + "/sweep/sweep.csv");
        std::string line;
        std::getline(csv, line);  // header
        std::vector<std::string> rows;
        while (std::getline(csv, line))
            if (!line.empty()) rows.push_back(line);
        ok = rows.size() == 12;
        for (int i = 0; ok && i < 6; ++i) {
            ok = rows[static_cast<std::size_t>(i)].rfind(
                     "jpeg," + std::to_string(dataio::kJpegGrid[i]) + ",", 0) == 0 &&
                 rows[static_cast<std::size_t>(i + 6)].rfind(
                     "blur," + std::to_string(dataio::kBlurGrid[i]) + ",", 0) == 0;
        }
        // Identity rows must match the plain evaluation bit-for-bit: compare
        // the metric cells (skipping dataset/=name columns) as strings.
        std::ifstream ecsv(scratch + "/eval/metrics.csv");
        std::string eh, erow;
        std::getline(ecsv, eh);
        std::getline(ecsv, erow);
        auto metric_cells = [](const std::string& row, int skip) {
            std::string out;
            std::size_t pos = 0;
            for (int i = 0; i < skip; ++i) pos = row.find(',', pos) + 1;
            return row.substr(pos);
        };
        std::string eval_cells = metric_cells(erow, 1);       // skip dataset
        std::string jpeg100 = metric_cells(rows[0], 3);       // skip kind,level,dataset
        std::string blur0 = metric_cells(rows[6], 3);
        ok = ok && jpeg100 == eval_cells && blur0 == eval_cells;
        detail = ok ? "12 rows in grid order; identity rows bit-identical to eval"
                    : "row mismatch (jpeg100='" + jpeg100 + "' eval='" + eval_cells + "')";
        ok = ok && fs::exists(scratch + "/sweep/sweep_jpeg.svg") &&
             fs::exists(scratch + "/sweep/sweep_blur.svg");
    } else {
        detail = "CLI invocation failed";
    }
    report("robustness-protocol-shape", ok, detail);
}

void criterion_checkpoint_roundtrip(const OverfitRun& run, const std::string& scratch) {
    fs::create_directories(scratch);
    std::string path = scratch + "/rt.imdp";
    metrics::MetricsReport before = pipeline::evaluate(*run.model, run.fixture, "rt");
    checkpoint::save(*run.model, path);
    checkpoint::Loaded loaded = checkpoint::load(path);
    metrics::MetricsReport after = pipeline::evaluate(*loaded.model, run.fixture, "rt");
    bool ok = before == after;
    std::ostringstream os;
    os << "evaluate(before) " << (ok ? "==" : "!=") << " evaluate(after), P-F1="
       << before.p_f1_fixed.value_or(-1);
    report("checkpoint-roundtrip", ok, os.str());
}

}  // namespace

int main() {
    std::cout << "IMDPrompter acceptance criteria\n" << std::string(60, '-') << "\n";
    criterion_metric_reproduction();
    criterion_otsu_oracle();
    criterion_ops_oracle();
    criterion_srm_property();
    criterion_cpc_contract();
    criterion_focal_degeneracy();
    criterion_gradient_checks();

    std::cerr << "training the overfit fixture (500 steps, 64x64)...\n";
    OverfitRun run = run_overfit();
    criterion_bayar_constraint(run);
    criterion_overfit(run);
    criterion_inference_purity(run);

    std::string scratch =
        (fs::temp_directory_path() / ("imdp_acc_" + std::to_string(::getpid()))).string();
    criterion_robustness_shape(run, scratch);
    criterion_checkpoint_roundtrip(run, scratch);
    fs::remove_all(scratch);

    int failed = 0;
    for (const Criterion& c : g_results)
        if (!c.pass) ++failed;
    std::cout << std::string(60, '-') << "\n"
              << g_results.size() - static_cast<std::size_t>(failed) << "/" << g_results.size()
              << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
