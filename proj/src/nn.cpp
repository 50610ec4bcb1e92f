#include "imdp/nn.hpp"

#include <cmath>

namespace imdp::nn {

Tensor kaiming_init(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(shape);
    double stddev = std::sqrt(2.0 / std::max(1, fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

Conv2d::Conv2d(int cin, int cout, int k, int stride_, Rng& rng, ad::Pad pad_, bool trainable)
    : stride(stride_), pad(pad_) {
    Tensor wt = kaiming_init({cout, cin, k, k}, cin * k * k, rng);
    Tensor bt({cout});
    if (trainable) {
        w = Var::param(std::move(wt));
        b = Var::param(std::move(bt));
    } else {
        w = Var::constant(std::move(wt));
        b = Var::constant(std::move(bt));
    }
}

SeparableConv2d::SeparableConv2d(int cin, int cout, int k, int stride_, Rng& rng)
    : stride(stride_) {
    dw = Var::param(kaiming_init({cin, k, k}, k * k, rng));
    dwb = Var::param(Tensor({cin}));
    pw = Conv2d(cin, cout, 1, 1, rng);
}

Linear::Linear(int din, int dout, Rng& rng, bool bias) {
    w = Var::param(kaiming_init({din, dout}, din, rng));
    if (bias) b = Var::param(Tensor({dout}));
}

InstanceNorm2d::InstanceNorm2d(int c) {
    gamma = Var::param(Tensor::full({c}, 1.0));
    beta = Var::param(Tensor({c}));
}

LayerNorm::LayerNorm(int d) {
    gamma = Var::param(Tensor::full({d}, 1.0));
    beta = Var::param(Tensor({d}));
}

Attention::Attention(int dim, Rng& rng)
    : q(dim, dim, rng), k(dim, dim, rng), v(dim, dim, rng), out(dim, dim, rng) {}

Var Attention::forward(const Var& queries, const Var& keys_values) const {
    int dim = q.w.value().dim(1);
    Var Q = q.forward(queries);
    Var K = k.forward(keys_values);
    Var V = v.forward(keys_values);
    Var scores = ad::scale(ad::matmul_nt(Q, K), 1.0 / std::sqrt(static_cast<double>(dim)));
    Var attn = ad::softmax_rows(scores);
    return out.forward(ad::matmul(attn, V));
}

Mlp::Mlp(int din, int hidden, int dout, Rng& rng)
    : fc1(din, hidden, rng), fc2(hidden, dout, rng) {}

// ---------------------------------------------------------------------------

AdamW::AdamW(std::vector<Var> params, Options opts) : params_(std::move(params)), opts_(opts) {
    for (const auto& p : params_) {
        m_.emplace_back(Tensor::zeros(p.value().shape()));
        v_.emplace_back(Tensor::zeros(p.value().shape()));
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void AdamW::step(double lr) {
    ++t_;
    double norm_sq = 0.0;
    for (const auto& p : params_) {
        if (!p.has_grad()) continue;
        const Tensor& g = p.node()->grad;
        for (std::size_t i = 0; i < g.size(); ++i) norm_sq += g[i] * g[i];
    }
    last_grad_norm_ = std::sqrt(norm_sq);
    double gscale = 1.0;
    if (opts_.clip_norm > 0.0 && last_grad_norm_ > opts_.clip_norm)
        gscale = opts_.clip_norm / last_grad_norm_;

    double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Var& p = params_[k];
        if (!p.has_grad()) continue;
        Tensor& w = p.mutable_value();
        const Tensor& g = p.node()->grad;
        for (std::size_t i = 0; i < w.size(); ++i) {
            double gi = g[i] * gscale;
            m_[k][i] = opts_.beta1 * m_[k][i] + (1.0 - opts_.beta1) * gi;
            v_[k][i] = opts_.beta2 * v_[k][i] + (1.0 - opts_.beta2) * gi * gi;
            double mhat = m_[k][i] / bc1;
            double vhat = v_[k][i] / bc2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + opts_.eps) + opts_.weight_decay * w[i]);
        }
    }
}

double lr_at_step(std::int64_t step, std::int64_t warmup_steps, std::int64_t total_steps,
                  double base_lr, double start_factor) {
    if (warmup_steps > 0 && step < warmup_steps) {
        double f = start_factor + (1.0 - start_factor) * (static_cast<double>(step) / warmup_steps);
        return base_lr * f;
    }
    if (total_steps <= warmup_steps) return base_lr;
    double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    progress = std::min(1.0, std::max(0.0, progress));
    return 0.5 * base_lr * (1.0 + std::cos(progress * 3.14159265358979323846));
}

}  // namespace imdp::nn
