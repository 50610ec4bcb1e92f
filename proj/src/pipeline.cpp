#include "imdp/pipeline.hpp"

#include <algorithm>
#include <sstream>

namespace imdp::pipeline {

using ad::Var;

ViewForward forward_views(const Model& model, const Tensor& image_chw) {
    int h = image_chw.dim(1), w = image_chw.dim(2);
    ViewForward out;

    Tensor srm_map = noise::srm_extract_chw(image_chw);
    Var bayar_map = noise::bayar_forward(image_chw, model.bayar());
    Var np_map = model.noiseprint().forward(Var::constant(image_chw));

    const auto& b_rgb = model.view_branch(ViewId::RGB);
    const auto& b_srm = model.view_branch(ViewId::SRM);
    const auto& b_bay = model.view_branch(ViewId::BAYAR);
    const auto& b_np = model.view_branch(ViewId::NOISEPRINT);

    out.f_rgb = b_rgb.segment(Var::constant(image_chw));
    out.f_srm = b_srm.segment(Var::constant(srm_map));
    out.f_bayar = b_bay.segment(bayar_map);
    out.f_noiseprint = b_np.segment(np_map);

    out.candidates = prompting::make_candidates(
        b_rgb.classify(out.f_rgb, h, w), b_srm.classify(out.f_srm, h, w),
        b_bay.classify(out.f_bayar, h, w), b_np.classify(out.f_noiseprint, h, w));
    return out;
}

namespace {

// Restricts a derived mask to non-padding pixels before box derivation.
BinaryMask apply_valid(const BinaryMask& mask, const Tensor& valid) {
    BinaryMask out = mask;
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            if (valid.at(y, x) == 0.0) out.set(y, x, false);
    return out;
}

ProbabilityMap decode_with_prompts(const Model& model, const Tensor& image_chw,
                                   const ViewForward& views, const ProbabilityMap& p_opt,
                                   const Tensor& valid, const Config& cfg) {
    BinaryMask m_opt = apply_valid(prompting::derive_mask(p_opt, cfg.mask_threshold), valid);
    std::vector<BoxPrompt> boxes = prompting::derive_boxes(m_opt, cfg.k_max);
    PromptEmbedding f_opt = model.fm().prompt_encode(m_opt, boxes);
    FeatureMap f_sam = model.fm().image_encode(image_chw);
    FeatureMap f_cfp = model.fusion().fuse(f_sam, views.f_rgb, views.f_srm, views.f_bayar,
                                           views.f_noiseprint);
    PromptEmbedding f_mix = model.mixer().mix(f_cfp, f_opt);
    return model.fm().mask_decode(f_cfp, f_mix);
}

}  // namespace

SampleForward forward_training(const Model& model, const dataio::Preprocessed& pre, int label,
                               const Config& cfg, prompting::OpsStats* stats) {
    SampleForward out;
    out.views = forward_views(model, pre.image);

    losses::FocalParams focal = cfg.focal();
    ProbabilityMap p_opt;
    if (cfg.force_view.empty()) {
        prompting::Selection sel =
            prompting::select_optimal(out.views.candidates, pre.gt, focal);
        p_opt = sel.p_opt;
        out.chosen = sel.chosen;
    } else {
        out.chosen = view_from_string(cfg.force_view);
        p_opt = out.views.candidates.map(out.chosen);
    }
    if (stats) stats->record(out.chosen);

    out.p_sam = decode_with_prompts(model, pre.image, out.views, p_opt, pre.valid, cfg);

    out.seg_sam = losses::focal_seg_loss(out.p_sam, pre.gt, focal);
    Var seg_p;
    for (ViewId v : {ViewId::RGB, ViewId::SRM, ViewId::BAYAR, ViewId::NOISEPRINT}) {
        Var term = losses::focal_seg_loss(out.views.candidates.map(v), pre.gt, focal);
        seg_p = seg_p.defined() ? ad::add(seg_p, term) : term;
    }
    out.seg_p = seg_p;
    out.cpc = prompting::cpc_loss({&out.views.candidates.map(ViewId::RGB),
                                   &out.views.candidates.map(ViewId::SRM),
                                   &out.views.candidates.map(ViewId::BAYAR),
                                   &out.views.candidates.map(ViewId::NOISEPRINT)},
                                  p_opt, pre.valid, focal);

    double omega0 = losses::otsu_threshold(out.p_sam.values(), pre.valid);
    Var yhat = losses::adaptive_pool_var(out.p_sam.var(), omega0, pre.valid);
    out.yhat = yhat.value()[0];
    out.img_level = losses::image_level_loss(yhat, static_cast<double>(label));
    return out;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(Model& model, const Config& cfg)
    : model_(model),
      cfg_(cfg),
      opt_([&] {
          nn::ParamList params = model.trainable_params();
          std::vector<Var> vars;
          vars.reserve(params.size());
          for (auto& [name, v] : params) vars.push_back(v);
          nn::AdamW::Options opts;
          opts.beta1 = cfg.beta1;
          opts.beta2 = cfg.beta2;
          opts.weight_decay = cfg.weight_decay;
          opts.clip_norm = cfg.clip_norm;
          return nn::AdamW(std::move(vars), opts);
      }()),
      shuffle_rng_(RngFactory(cfg.seed).stream("train.shuffle")),
      augment_rng_(RngFactory(cfg.seed).stream("train.augment")),
      reinit_rng_(RngFactory(cfg.seed).stream("train.bayar_reinit")) {
    pre_cfg_.size = cfg.image_size;
}

LossBreakdown Trainer::train_step(const std::vector<const ImageSample*>& batch) {
    check(!batch.empty(), "train_step: empty batch");
    opt_.zero_grad();
    double seg_sam = 0, seg_p = 0, cpc = 0, img = 0;
    double inv_n = 1.0 / static_cast<double>(batch.size());
    // Image-level loss ramp (full weight once the ramp window has passed).
    std::int64_t ramp_steps =
        static_cast<std::int64_t>(cfg_.img_loss_warmup_epochs) * steps_per_epoch_;
    double lambda3 = cfg_.lambda3;
    if (ramp_steps > 0 && step_ < ramp_steps)
        lambda3 *= static_cast<double>(step_) / static_cast<double>(ramp_steps);
    for (const ImageSample* sample : batch) {
        ImageSample prepared =
            cfg_.augment ? dataio::augment(*sample, augment_rng_,
                                           {cfg_.flip_prob, cfg_.min_crop_fraction})
                         : *sample;
        dataio::Preprocessed pre = dataio::preprocess(prepared, pre_cfg_);
        SampleForward fwd =
            forward_training(model_, pre, prepared.label(), cfg_, &stats_);

        Var total = ad::add(
            ad::add(fwd.seg_sam, ad::scale(fwd.seg_p, cfg_.lambda1)),
            ad::add(ad::scale(fwd.cpc, cfg_.lambda2), ad::scale(fwd.img_level, lambda3)));
        if (!std::isfinite(total.value()[0])) {
            std::ostringstream os;
            os << "non-finite loss at step " << step_ << " sample " << sample->id()
               << ": seg_sam=" << fwd.seg_sam.value()[0] << " seg_p=" << fwd.seg_p.value()[0]
               << " cpc=" << fwd.cpc.value()[0] << " img=" << fwd.img_level.value()[0];
            throw NonFiniteLoss(os.str());
        }
        ad::scale(total, inv_n).backward();

        seg_sam += fwd.seg_sam.value()[0] * inv_n;
        seg_p += fwd.seg_p.value()[0] * inv_n;
        cpc += fwd.cpc.value()[0] * inv_n;
        img += fwd.img_level.value()[0] * inv_n;
    }

    last_lr_ = nn::lr_at_step(step_, warmup_steps_, total_steps_, cfg_.lr,
                              cfg_.warmup_start_factor);
    opt_.step(last_lr_);
    noise::bayar_project_or_reinit(model_.bayar(), reinit_rng_);
    ++step_;
    return losses::total_loss(seg_sam, seg_p, cpc, img, cfg_.lambda1, cfg_.lambda2, lambda3);
}

std::vector<LossBreakdown> Trainer::run(const std::vector<ImageSample>& dataset,
                                        const StepCallback& on_step) {
    check_or<EmptyDataset>(!dataset.empty(), "training dataset is empty");
    steps_per_epoch_ =
        (static_cast<std::int64_t>(dataset.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
    total_steps_ = steps_per_epoch_ * cfg_.epochs;
    warmup_steps_ = steps_per_epoch_ * cfg_.warmup_epochs;
    std::int64_t budget = cfg_.max_steps > 0 ? std::min<std::int64_t>(cfg_.max_steps, total_steps_)
                                             : total_steps_;

    std::vector<LossBreakdown> history;
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    while (step_ < budget) {
        shuffle_rng_.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < order.size() && step_ < budget;
             start += static_cast<std::size_t>(cfg_.batch_size)) {
            std::vector<const ImageSample*> batch;
            for (std::size_t i = start;
                 i < std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size)); ++i)
                batch.push_back(&dataset[order[i]]);
            LossBreakdown loss = train_step(batch);
            history.push_back(loss);
            if (on_step) on_step(step_, loss);
        }
    }
    return history;
}

// ---------------------------------------------------------------------------

Prediction infer(const Model& model, const Tensor& image_hwc) {
    dataio::PreprocessConfig pre_cfg;
    pre_cfg.size = model.config().image_size;
    Prediction out;
    out.orig_h = image_hwc.dim(0);
    out.orig_w = image_hwc.dim(1);
    Tensor image_chw = dataio::preprocess_image(image_hwc, pre_cfg, out.valid);

    ViewForward views = forward_views(model, image_chw);
    prompting::InferencePrompt prompt = prompting::inference_prompt(
        views.candidates, model.config().mask_threshold, model.config().k_max);
    // Boxes are re-derived after masking out padding.
    ProbabilityMap p_sam = decode_with_prompts(model, image_chw, views, prompt.p_opt, out.valid,
                                               model.config());

    out.p_sam = p_sam.values();
    out.chosen = prompt.chosen;
    double omega0 = losses::otsu_threshold(out.p_sam, out.valid);
    Tensor select(out.p_sam.shape());
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < out.p_sam.size(); ++i)
        if (out.valid[i] != 0.0 && out.p_sam[i] >= omega0) {
            acc += out.p_sam[i];
            ++n;
        }
    out.score = n ? acc / static_cast<double>(n) : 0.0;
    return out;
}

std::vector<Prediction> predict_all(const Model& model, const std::vector<ImageSample>& samples) {
    std::vector<Prediction> preds;
    preds.reserve(samples.size());
    for (const ImageSample& s : samples) preds.push_back(infer(model, s.image()));
    return preds;
}

metrics::MetricsReport score_predictions(const std::vector<Prediction>& preds,
                                         const std::vector<ImageSample>& samples,
                                         const std::string& dataset_name) {
    check_or<EmptyDataset>(!samples.empty(), "evaluate: empty dataset");
    check_or<DimensionMismatch>(preds.size() == samples.size(),
                                "evaluate: prediction count mismatch");
    metrics::MetricsReport report;
    report.dataset = dataset_name;
    report.n_images = static_cast<int>(samples.size());

    std::vector<double> scores;
    std::vector<int> labels;
    double f1_fixed_sum = 0.0, f1_best_sum = 0.0;
    int n_manip = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const ImageSample& s = samples[i];
        const Prediction& p = preds[i];
        scores.push_back(p.score);
        labels.push_back(s.label());
        if (s.label() != 1) continue;
        ++n_manip;
        // Rebuild the padded ground truth on the prediction grid.
        int size = p.p_sam.dim(0);
        Tensor gt = Tensor::full({size, size}, kIgnoreValue);
        const auto& mask = s.mask();
        for (int y = 0; y < p.orig_h; ++y)
            for (int x = 0; x < p.orig_w; ++x)
                gt.at(y, x) = mask.has_value() ? (*mask).at(y, x) : 0.0;
        f1_fixed_sum += metrics::pixel_f1(p.p_sam, gt, 0.5);
        f1_best_sum += metrics::best_threshold_f1(p.p_sam, gt).first;
    }
    report.n_manipulated = n_manip;
    if (n_manip > 0) {
        report.p_f1_fixed = f1_fixed_sum / n_manip;
        report.p_f1_best = f1_best_sum / n_manip;
    }
    metrics::ImageDetectionMetrics img = metrics::image_metrics(scores, labels);
    report.auc = img.auc;
    report.sensitivity = img.sensitivity;
    report.specificity = img.specificity;
    report.i_f1 = img.i_f1;
    if (report.i_f1 && report.p_f1_fixed)
        report.com_f1 = metrics::composite_f1(*report.i_f1, *report.p_f1_fixed);
    return report;
}

metrics::MetricsReport evaluate(const Model& model, const std::vector<ImageSample>& samples,
                                const std::string& dataset_name) {
    return score_predictions(predict_all(model, samples), samples, dataset_name);
}

std::vector<SweepRow> robustness_sweep(const Model& model,
                                       const std::vector<ImageSample>& samples) {
    std::vector<dataio::DegradationSpec> grid;
    for (int q : dataio::kJpegGrid) grid.push_back(dataio::DegradationSpec::jpeg(q));
    for (int k : dataio::kBlurGrid) grid.push_back(dataio::DegradationSpec::blur(k));

    std::vector<SweepRow> rows;
    for (const auto& spec : grid) {
        std::vector<ImageSample> degraded;
        degraded.reserve(samples.size());
        for (const ImageSample& s : samples) {
            // Storage order is BGR while the JPEG codec expects RGB.
            Tensor rgb({s.height(), s.width(), 3});
            for (int y = 0; y < s.height(); ++y)
                for (int x = 0; x < s.width(); ++x)
                    for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = s.image().at(y, x, 2 - c);
            Tensor deg = dataio::degrade(rgb, spec);
            Tensor back({s.height(), s.width(), 3});
            for (int y = 0; y < s.height(); ++y)
                for (int x = 0; x < s.width(); ++x)
                    for (int c = 0; c < 3; ++c) back.at(y, x, c) = deg.at(y, x, 2 - c);
            degraded.emplace_back(s.id(), std::move(back), s.mask_unchecked(),
                                  s.label_unchecked());
        }
        rows.push_back({spec, evaluate(model, degraded, spec.name())});
    }
    return rows;
}

}  // namespace imdp::pipeline
