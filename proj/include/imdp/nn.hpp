// Small layer zoo on top of the autodiff core, plus the AdamW optimizer.
// Layers own their parameter Vars; parameter discovery walks the layers in a
// fixed registration order so checkpoints and optimizers are deterministic.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "imdp/autodiff.hpp"
#include "imdp/rng.hpp"

namespace imdp::nn {

using ad::Var;

/// Ordered (name, parameter) pairs. Order is the serialization order.
using ParamList = std::vector<std::pair<std::string, Var>>;

inline void add_param(ParamList& out, const std::string& name, const Var& p) {
    out.emplace_back(name, p);
}

Tensor kaiming_init(std::vector<int> shape, int fan_in, Rng& rng);

struct Conv2d {
    Var w, b;
    int stride = 1;
    ad::Pad pad = ad::Pad::Zero;

    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride, Rng& rng, ad::Pad pad = ad::Pad::Zero,
           bool trainable = true);

    Var forward(const Var& x) const { return ad::conv2d(x, w, b, stride, pad); }
    void collect(const std::string& prefix, ParamList& out) const {
        add_param(out, prefix + ".w", w);
        add_param(out, prefix + ".b", b);
    }
};

/// Depthwise 3x3 + pointwise 1x1, the MobileNet building block.
struct SeparableConv2d {
    Var dw, dwb;  // (C,k,k), (C)
    Conv2d pw;    // 1x1
    int stride = 1;

    SeparableConv2d() = default;
    SeparableConv2d(int cin, int cout, int k, int stride, Rng& rng);

    Var forward(const Var& x) const {
        return pw.forward(ad::depthwise_conv2d(x, dw, dwb, stride));
    }
    void collect(const std::string& prefix, ParamList& out) const {
        add_param(out, prefix + ".dw", dw);
        add_param(out, prefix + ".dwb", dwb);
        pw.collect(prefix + ".pw", out);
    }
};

struct Linear {
    Var w, b;

    Linear() = default;
    Linear(int din, int dout, Rng& rng, bool bias = true);

    Var forward(const Var& x) const { return ad::linear(x, w, b); }
    void collect(const std::string& prefix, ParamList& out) const {
        add_param(out, prefix + ".w", w);
        if (b.defined()) add_param(out, prefix + ".b", b);
    }
};

struct InstanceNorm2d {
    Var gamma, beta;

    InstanceNorm2d() = default;
    explicit InstanceNorm2d(int c);

    Var forward(const Var& x) const { return ad::instance_norm(x, gamma, beta); }
    void collect(const std::string& prefix, ParamList& out) const {
        add_param(out, prefix + ".gamma", gamma);
        add_param(out, prefix + ".beta", beta);
    }
};

struct LayerNorm {
    Var gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(int d);

    Var forward(const Var& x) const { return ad::layer_norm(x, gamma, beta); }
    void collect(const std::string& prefix, ParamList& out) const {
        add_param(out, prefix + ".gamma", gamma);
        add_param(out, prefix + ".beta", beta);
    }
};

/// Single-head scaled dot-product attention with output projection.
struct Attention {
    Linear q, k, v, out;

    Attention() = default;
    Attention(int dim, Rng& rng);

    /// queries:(Nq,D) keys_values:(Nk,D) -> (Nq,D)
    Var forward(const Var& queries, const Var& keys_values) const;
    void collect(const std::string& prefix, ParamList& out_list) const {
        q.collect(prefix + ".q", out_list);
        k.collect(prefix + ".k", out_list);
        v.collect(prefix + ".v", out_list);
        out.collect(prefix + ".out", out_list);
    }
};

/// Two-layer perceptron with GELU, applied row-wise to tokens.
struct Mlp {
    Linear fc1, fc2;

    Mlp() = default;
    Mlp(int din, int hidden, int dout, Rng& rng);

    Var forward(const Var& x) const { return fc2.forward(ad::gelu(fc1.forward(x))); }
    void collect(const std::string& prefix, ParamList& out) const {
        fc1.collect(prefix + ".fc1", out);
        fc2.collect(prefix + ".fc2", out);
    }
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adam with decoupled weight decay and optional global-norm clipping.
class AdamW {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.01;
        double clip_norm = 1.0;  // <=0 disables clipping
    };

    AdamW(std::vector<Var> params, Options opts);

    void zero_grad();
    /// Clips (if enabled) and applies one update with the given learning rate.
    void step(double lr);
    double last_grad_norm() const { return last_grad_norm_; }
    std::int64_t step_count() const { return t_; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    Options opts_;
    std::int64_t t_ = 0;
    double last_grad_norm_ = 0.0;
};

/// Linear warmup from lr*start_factor over `warmup_steps`, then cosine
/// annealing to zero at `total_steps`.
double lr_at_step(std::int64_t step, std::int64_t warmup_steps, std::int64_t total_steps,
                  double base_lr, double start_factor = 1e-4);

}  // namespace imdp::nn
