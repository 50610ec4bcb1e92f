// Reverse-mode automatic differentiation over Tensor.
//
// Define-by-run tape: every op builds a Node whose backprop closure scatters
// gradients into its parents. Graphs are rebuilt each forward pass and freed
// when the loss root goes out of scope; parameter leaves live in the modules
// that own them and accumulate gradients across a batch.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "imdp/tensor.hpp"

namespace imdp::ad {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;
    std::string name;
};

/// Value-semantic handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    /// Leaf with no gradient (inputs, targets, frozen weights).
    static Var constant(Tensor v);
    /// Trainable leaf.
    static Var param(Tensor v, std::string name = "");

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const std::string& name() const { return node_->name; }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    /// Gradient accumulated by backward(); zeros if none reached this leaf.
    Tensor grad_or_zero() const;
    bool has_grad() const { return node_ && node_->has_grad; }
    void zero_grad();

    /// Runs backprop from this scalar node (size must be 1).
    void backward() const;

    /// Constant copy of the current value; no gradient flows through it.
    Var detach() const { return constant(node_->value); }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

using VarList = std::vector<Var>;

enum class Pad { Zero, Reflect };

// --- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// a*x + b with scalar constants.
Var affine(const Var& x, double a, double b);
Var scale(const Var& x, double a);
Var gelu(const Var& x);
Var sigmoid(const Var& x);
Var clamp(const Var& x, double lo, double hi);

// --- linear algebra ---------------------------------------------------------
/// x:(N,D) w:(D,M) b:(M) -> (N,M). Pass b undefined to skip the bias.
Var linear(const Var& x, const Var& w, const Var& b);
Var matmul(const Var& a, const Var& b);
/// a:(N,K) b:(M,K) -> (N,M) = a b^T.
Var matmul_nt(const Var& a, const Var& b);
Var softmax_rows(const Var& x);
/// x:(N,D), gamma/beta:(D).
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// --- convolution ------------------------------------------------------------
/// x:(Cin,H,W) w:(Cout,Cin,kh,kw) b:(Cout) stride>=1, same-padding kh/2.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, Pad pad = Pad::Zero);
/// x:(C,H,W) w:(C,kh,kw) b:(C), per-channel convolution.
Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, int stride = 1);
/// x:(C,H,W), gamma/beta:(C), per-channel (population) normalization.
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// --- shape ------------------------------------------------------------------
Var reshape(const Var& x, std::vector<int> shape);
Var concat_rows(const VarList& xs);
Var slice_rows(const Var& x, int start, int len);
Var concat_channels(const VarList& xs);
/// (C,H,W) -> (H*W, C) tokens in row-major spatial order.
Var chw_to_tokens(const Var& x);
Var tokens_to_chw(const Var& x, int h, int w);

// --- resampling / pooling ---------------------------------------------------
/// Half-pixel-centered bilinear, edge-clamped.
Var bilinear_resize(const Var& x, int out_h, int out_w);
/// Keys a=-0.5 bicubic, half-pixel centers, linear-extrapolating boundary
/// (odd-symmetric reflection), so affine images resample exactly.
Var bicubic_resize(const Var& x, int out_h, int out_w);
Var global_avg_pool(const Var& x);                    // (C,H,W) -> (C)
Var avg_pool_grid(const Var& x, int gh, int gw);      // equal blocks
Var scale_channels(const Var& x, const Var& s);       // (C,H,W) * (C)
/// sum_c h(c)*u(c,:,:) + bias -> (H,W). bias is a (1) param or undefined.
Var channel_dot(const Var& u, const Var& h, const Var& bias);

// --- reductions / losses ----------------------------------------------------
Var mean_all(const Var& x);
Var sum_all(const Var& x);
/// Mean of x over pixels where select!=0; select is constant. Empty -> 0.
Var masked_mean(const Var& x, const Tensor& select);
/// Mean focal loss over valid pixels. target/valid are constant (H,W) {0,1}
/// masks; probabilities are clamped to [eps, 1-eps] before the log.
Var focal_loss_op(const Var& p, const Tensor& target, const Tensor& valid, double gamma,
                  double alpha, double eps);
/// Binary cross-entropy of a scalar prediction against label y in {0,1}.
Var bce_scalar(const Var& yhat, double y, double eps);

}  // namespace imdp::ad
