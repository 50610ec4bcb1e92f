#include "imdp/prompting.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace imdp::prompting {

ProbabilityMap ensemble(const ProbabilityMap& p_rgb, const ProbabilityMap& p_srm,
                        const ProbabilityMap& p_bayar, const ProbabilityMap& p_noiseprint) {
    const Tensor& a = p_rgb.values();
    check_or<DimensionMismatch>(a.same_shape(p_srm.values()) && a.same_shape(p_bayar.values()) &&
                                    a.same_shape(p_noiseprint.values()),
                                "ensemble: candidate dims differ");
    Var mean = ad::scale(ad::add(ad::add(p_rgb.var(), p_srm.var()),
                                 ad::add(p_bayar.var(), p_noiseprint.var())),
                         0.25);
    return ProbabilityMap(mean);
}

PromptCandidateSet make_candidates(const ProbabilityMap& p_rgb, const ProbabilityMap& p_srm,
                                   const ProbabilityMap& p_bayar,
                                   const ProbabilityMap& p_noiseprint) {
    PromptCandidateSet set;
    set.maps[0] = p_rgb;
    set.maps[1] = p_srm;
    set.maps[2] = p_bayar;
    set.maps[3] = p_noiseprint;
    set.maps[4] = ensemble(p_rgb, p_srm, p_bayar, p_noiseprint);
    const Tensor& ens = set.maps[4].values();
    for (std::size_t i = 0; i < ens.size(); ++i) {
        double mean = (p_rgb.values()[i] + p_srm.values()[i] + p_bayar.values()[i] +
                       p_noiseprint.values()[i]) /
                      4.0;
        check(std::abs(ens[i] - mean) < 1e-6, "ensemble entry deviates from the candidate mean");
    }
    return set;
}

Selection select_optimal(PromptCandidateSet& candidates, const Tensor& gt,
                         const losses::FocalParams& params) {
    check_or<MissingGroundTruth>(!gt.empty(), "select_optimal requires ground truth");
    int best = 0;
    for (int i = 0; i < 5; ++i) {
        const ProbabilityMap& m = candidates.maps[static_cast<std::size_t>(i)];
        check_or<DimensionMismatch>(m.values().same_shape(gt),
                                    "select_optimal: candidate dims differ from G");
        candidates.losses[static_cast<std::size_t>(i)] =
            losses::focal_seg_value(m.values(), gt, params);
        if (candidates.losses[static_cast<std::size_t>(i)] <
            candidates.losses[static_cast<std::size_t>(best)])
            best = i;  // strict: ties keep the earlier view in the fixed order
    }
    return Selection{candidates.maps[static_cast<std::size_t>(best)], kViewOrder[best]};
}

BinaryMask derive_mask(const ProbabilityMap& p_opt, double threshold) {
    check_or<ValueRange>(threshold > 0.0 && threshold < 1.0, "mask threshold must be in (0,1)");
    const Tensor& v = p_opt.values();
    BinaryMask m(v.dim(0), v.dim(1));
    for (int y = 0; y < v.dim(0); ++y)
        for (int x = 0; x < v.dim(1); ++x) m.set(y, x, v.at(y, x) >= threshold);
    return m;
}

std::vector<BoxPrompt> derive_boxes(const BinaryMask& mask, int k_max) {
    int h = mask.height(), w = mask.width();
    std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
    struct Component {
        int min_x, min_y, max_x, max_y;
        std::int64_t area;
    };
    std::vector<Component> comps;

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(y, x) || label[static_cast<std::size_t>(y) * w + x] >= 0) continue;
            int id = static_cast<int>(comps.size());
            Component c{x, y, x, y, 0};
            std::deque<std::pair<int, int>> queue{{y, x}};
            label[static_cast<std::size_t>(y) * w + x] = id;
            while (!queue.empty()) {
                auto [cy, cx] = queue.front();
                queue.pop_front();
                ++c.area;
                c.min_x = std::min(c.min_x, cx);
                c.max_x = std::max(c.max_x, cx);
                c.min_y = std::min(c.min_y, cy);
                c.max_y = std::max(c.max_y, cy);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        int ny = cy + dy, nx = cx + dx;
                        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                        std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                        if (!mask.at(ny, nx) || label[ni] >= 0) continue;
                        label[ni] = id;
                        queue.emplace_back(ny, nx);
                    }
            }
            comps.push_back(c);
        }

    // Largest first; stable sort keeps row-major discovery order on ties.
    std::stable_sort(comps.begin(), comps.end(),
                     [](const Component& a, const Component& b) { return a.area > b.area; });
    std::vector<BoxPrompt> boxes;
    for (const Component& c : comps) {
        if (static_cast<int>(boxes.size()) >= k_max) break;
        boxes.emplace_back(c.min_x, c.min_y, c.max_x, c.max_y, w, h);
    }
    return boxes;
}

Var cpc_loss(const std::array<const ProbabilityMap*, 4>& views, const ProbabilityMap& p_opt,
             const Tensor& valid, const losses::FocalParams& params) {
    // Hard pseudo-labels: binarize and detach so no gradient reaches the
    // branch that produced P_opt through the target.
    const Tensor& pv = p_opt.values();
    Tensor target(pv.shape());
    for (std::size_t i = 0; i < pv.size(); ++i) target[i] = pv[i] >= 0.5 ? 1.0 : 0.0;
    Tensor val = valid.empty() ? Tensor::full(pv.shape(), 1.0) : valid;
    check_or<DimensionMismatch>(val.same_shape(pv), "cpc: valid mask dims differ");

    Var total;
    for (const ProbabilityMap* view : views) {
        check_or<DimensionMismatch>(view->values().same_shape(pv), "cpc: view dims differ");
        Var term = ad::focal_loss_op(view->var(), target, val, params.gamma, params.alpha,
                                     params.clamp_eps);
        total = total.defined() ? ad::add(total, term) : term;
    }
    return total;
}

PromptMixer::PromptMixer(int feature_channels, int prompt_dim, Rng& rng)
    : prompt_dim_(prompt_dim),
      proj_(feature_channels, prompt_dim, rng),
      mlp_(prompt_dim, 2 * prompt_dim, prompt_dim, rng) {}

PromptEmbedding PromptMixer::mix(const FeatureMap& f_cfp, const PromptEmbedding& f_opt) const {
    check_or<DimensionMismatch>(f_opt.dim() == prompt_dim_, "pmm: prompt token dim mismatch");
    Var cfp_tokens = proj_.forward(ad::chw_to_tokens(f_cfp.var()));
    Var all = ad::concat_rows({cfp_tokens, f_opt.var()});
    return PromptEmbedding(mlp_.forward(all));
}

void PromptMixer::collect(const std::string& prefix, nn::ParamList& out) const {
    proj_.collect(prefix + ".proj", out);
    mlp_.collect(prefix + ".mlp", out);
}

InferencePrompt inference_prompt(const PromptCandidateSet& candidates, double threshold,
                                 int k_max) {
    InferencePrompt out;
    out.p_opt = candidates.map(ViewId::ENS);
    out.chosen = ViewId::ENS;
    out.mask = derive_mask(out.p_opt, threshold);
    out.boxes = derive_boxes(out.mask, k_max);
    return out;
}

std::int64_t OpsStats::total() const {
    std::int64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
}

double OpsStats::proportion(ViewId v) const {
    std::int64_t t = total();
    return t ? static_cast<double>(count(v)) / static_cast<double>(t) : 0.0;
}

std::string OpsStats::to_csv() const {
    std::ostringstream os;
    os << "view_id,count,proportion\n";
    for (ViewId v : kViewOrder)
        os << to_string(v) << "," << count(v) << "," << proportion(v) << "\n";
    return os.str();
}

}  // namespace imdp::prompting
