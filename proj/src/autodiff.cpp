#include "imdp/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace imdp::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

std::shared_ptr<Node> make_node(Tensor value, std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

Tensor& grad_buf(const std::shared_ptr<Node>& n) {
    if (!n->has_grad) {
        n->grad = Tensor::zeros(n->value.shape());
        n->has_grad = true;
    }
    return n->grad;
}

void accum(const std::shared_ptr<Node>& n, const Tensor& g) {
    if (!n->requires_grad) return;
    grad_buf(n) += g;
}

int mirror_index(int i, int n) {
    // reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        if (n == 1) return 0;
    }
    return i;
}

}  // namespace

// ---------------------------------------------------------------------------
// Var basics
// ---------------------------------------------------------------------------

Var Var::constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return Var(n);
}

Var Var::param(Tensor v, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    n->name = std::move(name);
    return Var(n);
}

Tensor Var::grad_or_zero() const {
    if (node_ && node_->has_grad) return node_->grad;
    return Tensor::zeros(node_->value.shape());
}

void Var::zero_grad() {
    if (!node_) return;
    node_->has_grad = false;
    node_->grad = Tensor();
}

void Var::backward() const {
    check(node_ != nullptr && node_->value.size() == 1, "backward requires a defined scalar root");
    if (!node_->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> done, instack;
    struct Frame {
        Node* n;
        std::size_t next;
    };
    std::vector<Frame> stack{{node_.get(), 0}};
    instack.insert(node_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !done.count(p) && !instack.count(p)) {
                stack.push_back({p, 0});
                instack.insert(p);
            }
        } else {
            order.push_back(f.n);
            done.insert(f.n);
            instack.erase(f.n);
            stack.pop_back();
        }
    }

    node_->grad = Tensor::full(node_->value.shape(), 1.0);
    node_->has_grad = true;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->has_grad) n->backprop();
    }
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_or<DimensionMismatch>(a.value().same_shape(b.value()), "add: shape mismatch");
    Tensor out = a.value();
    out += b.value();
    auto n = make_node(std::move(out), {a.node(), b.node()});
    Node* self = n.get();
    auto pa = a.node(), pb = b.node();
    n->backprop = [self, pa, pb] {
        accum(pa, self->grad);
        accum(pb, self->grad);
    };
    return Var(n);
}

Var sub(const Var& a, const Var& b) { return add(a, affine(b, -1.0, 0.0)); }

Var mul(const Var& a, const Var& b) {
    check_or<DimensionMismatch>(a.value().same_shape(b.value()), "mul: shape mismatch");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    auto n = make_node(std::move(out), {a.node(), b.node()});
    Node* self = n.get();
    auto pa = a.node(), pb = b.node();
    n->backprop = [self, pa, pb] {
        if (pa->requires_grad) {
            Tensor g = self->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= pb->value[i];
            accum(pa, g);
        }
        if (pb->requires_grad) {
            Tensor g = self->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= pa->value[i];
            accum(pb, g);
        }
    };
    return Var(n);
}

Var affine(const Var& x, double a, double b) {
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * out[i] + b;
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px, a] {
        Tensor g = self->grad;
        g *= a;
        accum(px, g);
    };
    return Var(n);
}

Var scale(const Var& x, double a) { return affine(x, a, 0.0); }

Var gelu(const Var& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = out[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px] {
        Tensor g = self->grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double v = px->value[i];
            double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            g[i] *= cdf + v * pdf;
        }
        accum(px, g);
    };
    return Var(n);
}

Var sigmoid(const Var& x) {
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px] {
        Tensor g = self->grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double s = self->value[i];
            g[i] *= s * (1.0 - s);
        }
        accum(px, g);
    };
    return Var(n);
}

Var clamp(const Var& x, double lo, double hi) {
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, out[i]));
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px, lo, hi] {
        Tensor g = self->grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double v = px->value[i];
            if (v < lo || v > hi) g[i] = 0.0;
        }
        accum(px, g);
    };
    return Var(n);
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Var linear(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    check_or<DimensionMismatch>(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(0),
                                "linear: shape mismatch");
    int N = xv.dim(0), D = xv.dim(1), M = wv.dim(1);
    Tensor out({N, M});
    MapMat(out.data(), N, M).noalias() = CMapMat(xv.data(), N, D) * CMapMat(wv.data(), D, M);
    if (b.defined()) {
        check_or<DimensionMismatch>(b.value().rank() == 1 && b.value().dim(0) == M,
                                    "linear: bias mismatch");
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < M; ++j) out.at(i, j) += b.value()[static_cast<std::size_t>(j)];
    }
    std::vector<std::shared_ptr<Node>> parents{x.node(), w.node()};
    if (b.defined()) parents.push_back(b.node());
    auto n = make_node(std::move(out), std::move(parents));
    Node* self = n.get();
    auto px = x.node(), pw = w.node();
    auto pb = b.defined() ? b.node() : nullptr;
    n->backprop = [self, px, pw, pb, N, D, M] {
        CMapMat gy(self->grad.data(), N, M);
        if (px->requires_grad) {
            MapMat gx(grad_buf(px).data(), N, D);
            gx.noalias() += gy * CMapMat(pw->value.data(), D, M).transpose();
        }
        if (pw->requires_grad) {
            MapMat gw(grad_buf(pw).data(), D, M);
            gw.noalias() += CMapMat(px->value.data(), N, D).transpose() * gy;
        }
        if (pb && pb->requires_grad) {
            Tensor& gb = grad_buf(pb);
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < M; ++j) gb[static_cast<std::size_t>(j)] += self->grad.at(i, j);
        }
    };
    return Var(n);
}

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_or<DimensionMismatch>(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0),
                                "matmul: shape mismatch");
    int N = av.dim(0), K = av.dim(1), M = bv.dim(1);
    Tensor out({N, M});
    MapMat(out.data(), N, M).noalias() = CMapMat(av.data(), N, K) * CMapMat(bv.data(), K, M);
    auto n = make_node(std::move(out), {a.node(), b.node()});
    Node* self = n.get();
    auto pa = a.node(), pb = b.node();
    n->backprop = [self, pa, pb, N, K, M] {
        CMapMat gy(self->grad.data(), N, M);
        if (pa->requires_grad)
            MapMat(grad_buf(pa).data(), N, K).noalias() +=
                gy * CMapMat(pb->value.data(), K, M).transpose();
        if (pb->requires_grad)
            MapMat(grad_buf(pb).data(), K, M).noalias() +=
                CMapMat(pa->value.data(), N, K).transpose() * gy;
    };
    return Var(n);
}

Var matmul_nt(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_or<DimensionMismatch>(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(1),
                                "matmul_nt: shape mismatch");
    int N = av.dim(0), K = av.dim(1), M = bv.dim(0);
    Tensor out({N, M});
    MapMat(out.data(), N, M).noalias() =
        CMapMat(av.data(), N, K) * CMapMat(bv.data(), M, K).transpose();
    auto n = make_node(std::move(out), {a.node(), b.node()});
    Node* self = n.get();
    auto pa = a.node(), pb = b.node();
    n->backprop = [self, pa, pb, N, K, M] {
        CMapMat gy(self->grad.data(), N, M);
        if (pa->requires_grad)
            MapMat(grad_buf(pa).data(), N, K).noalias() += gy * CMapMat(pb->value.data(), M, K);
        if (pb->requires_grad)
            MapMat(grad_buf(pb).data(), M, K).noalias() +=
                gy.transpose() * CMapMat(pa->value.data(), N, K);
    };
    return Var(n);
}

Var softmax_rows(const Var& x) {
    const Tensor& xv = x.value();
    check_or<DimensionMismatch>(xv.rank() == 2, "softmax_rows: rank-2 input required");
    int N = xv.dim(0), M = xv.dim(1);
    Tensor out({N, M});
    for (int i = 0; i < N; ++i) {
        double mx = -1e300;
        for (int j = 0; j < M; ++j) mx = std::max(mx, xv.at(i, j));
        double z = 0.0;
        for (int j = 0; j < M; ++j) {
            double e = std::exp(xv.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < M; ++j) out.at(i, j) /= z;
    }
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px, N, M] {
        if (!px->requires_grad) return;
        Tensor g({N, M});
        for (int i = 0; i < N; ++i) {
            double dot = 0.0;
            for (int j = 0; j < M; ++j) dot += self->grad.at(i, j) * self->value.at(i, j);
            for (int j = 0; j < M; ++j)
                g.at(i, j) = self->value.at(i, j) * (self->grad.at(i, j) - dot);
        }
        accum(px, g);
    };
    return Var(n);
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.value();
    check_or<DimensionMismatch>(xv.rank() == 2, "layer_norm: rank-2 input required");
    int N = xv.dim(0), D = xv.dim(1);
    check_or<DimensionMismatch>(gamma.value().dim(0) == D && beta.value().dim(0) == D,
                                "layer_norm: gamma/beta mismatch");
    Tensor out({N, D}), xhat({N, D}), istd({N});
    for (int i = 0; i < N; ++i) {
        double mu = 0.0;
        for (int j = 0; j < D; ++j) mu += xv.at(i, j);
        mu /= D;
        double var = 0.0;
        for (int j = 0; j < D; ++j) {
            double d = xv.at(i, j) - mu;
            var += d * d;
        }
        var /= D;
        double is = 1.0 / std::sqrt(var + eps);
        istd[static_cast<std::size_t>(i)] = is;
        for (int j = 0; j < D; ++j) {
            double h = (xv.at(i, j) - mu) * is;
            xhat.at(i, j) = h;
            out.at(i, j) = gamma.value()[static_cast<std::size_t>(j)] * h +
                           beta.value()[static_cast<std::size_t>(j)];
        }
    }
    auto n = make_node(std::move(out), {x.node(), gamma.node(), beta.node()});
    Node* self = n.get();
    auto px = x.node(), pg = gamma.node(), pb = beta.node();
    n->backprop = [self, px, pg, pb, xhat, istd, N, D] {
        for (int i = 0; i < N; ++i) {
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (int j = 0; j < D; ++j) {
                double dh = self->grad.at(i, j) * pg->value[static_cast<std::size_t>(j)];
                sum_dh += dh;
                sum_dh_h += dh * xhat.at(i, j);
            }
            if (px->requires_grad) {
                Tensor& gx = grad_buf(px);
                double is = istd[static_cast<std::size_t>(i)];
                for (int j = 0; j < D; ++j) {
                    double dh = self->grad.at(i, j) * pg->value[static_cast<std::size_t>(j)];
                    gx.at(i, j) += is * (dh - sum_dh / D - xhat.at(i, j) * sum_dh_h / D);
                }
            }
        }
        if (pg->requires_grad) {
            Tensor& gg = grad_buf(pg);
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < D; ++j)
                    gg[static_cast<std::size_t>(j)] += self->grad.at(i, j) * xhat.at(i, j);
        }
        if (pb->requires_grad) {
            Tensor& gb = grad_buf(pb);
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < D; ++j) gb[static_cast<std::size_t>(j)] += self->grad.at(i, j);
        }
    };
    return Var(n);
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, Pad pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    check_or<DimensionMismatch>(xv.rank() == 3 && wv.rank() == 4, "conv2d: bad ranks");
    int Cin = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    int Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    check_or<ChannelMismatch>(wv.dim(1) == Cin, "conv2d: input channels mismatch");
    int ph = kh / 2, pw_ = kw / 2;
    int OH = (H + 2 * ph - kh) / stride + 1;
    int OW = (W + 2 * pw_ - kw) / stride + 1;
    int K = Cin * kh * kw, N = OH * OW;

    // im2col with an index map so both forward and backward share the layout.
    auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(K) * N, -1);
    auto col = std::make_shared<std::vector<double>>(static_cast<std::size_t>(K) * N, 0.0);
    for (int c = 0; c < Cin; ++c)
        for (int di = 0; di < kh; ++di)
            for (int dj = 0; dj < kw; ++dj) {
                int k = (c * kh + di) * kw + dj;
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        int iy = oy * stride - ph + di;
                        int ix = ox * stride - pw_ + dj;
                        if (pad == Pad::Reflect) {
                            iy = mirror_index(iy, H);
                            ix = mirror_index(ix, W);
                        }
                        std::size_t pos =
                            static_cast<std::size_t>(k) * N + static_cast<std::size_t>(oy) * OW + ox;
                        if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
                            int flat = (c * H + iy) * W + ix;
                            (*idx)[pos] = flat;
                            (*col)[pos] = xv[static_cast<std::size_t>(flat)];
                        }
                    }
            }

    Tensor out({Cout, OH, OW});
    MapMat(out.data(), Cout, N).noalias() =
        CMapMat(wv.data(), Cout, K) * CMapMat(col->data(), K, N);
    if (b.defined()) {
        check_or<DimensionMismatch>(b.value().dim(0) == Cout, "conv2d: bias mismatch");
        for (int c = 0; c < Cout; ++c) {
            double bv = b.value()[static_cast<std::size_t>(c)];
            for (int i = 0; i < N; ++i) out[static_cast<std::size_t>(c) * N + i] += bv;
        }
    }

    std::vector<std::shared_ptr<Node>> parents{x.node(), w.node()};
    if (b.defined()) parents.push_back(b.node());
    auto n = make_node(std::move(out), std::move(parents));
    Node* self = n.get();
    auto px = x.node(), pw = w.node();
    auto pb = b.defined() ? b.node() : nullptr;
    n->backprop = [self, px, pw, pb, idx, col, Cout, K, N] {
        CMapMat gy(self->grad.data(), Cout, N);
        if (pw->requires_grad) {
            MapMat gw(grad_buf(pw).data(), Cout, K);
            gw.noalias() += gy * CMapMat(col->data(), K, N).transpose();
        }
        if (pb && pb->requires_grad) {
            Tensor& gb = grad_buf(pb);
            for (int c = 0; c < Cout; ++c) gb[static_cast<std::size_t>(c)] += gy.row(c).sum();
        }
        if (px->requires_grad) {
            RowMat gcol = CMapMat(pw->value.data(), Cout, K).transpose() * gy;  // K x N
            Tensor& gx = grad_buf(px);
            const std::vector<int>& im = *idx;
            for (std::size_t p = 0; p < im.size(); ++p)
                if (im[p] >= 0)
                    gx[static_cast<std::size_t>(im[p])] += gcol(p / static_cast<std::size_t>(N),
                                                                p % static_cast<std::size_t>(N));
        }
    };
    return Var(n);
}

Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, int stride) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    check_or<DimensionMismatch>(xv.rank() == 3 && wv.rank() == 3, "depthwise: bad ranks");
    int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    check_or<ChannelMismatch>(wv.dim(0) == C, "depthwise: channel mismatch");
    int kh = wv.dim(1), kw = wv.dim(2);
    int ph = kh / 2, pw_ = kw / 2;
    int OH = (H + 2 * ph - kh) / stride + 1;
    int OW = (W + 2 * pw_ - kw) / stride + 1;

    Tensor out({C, OH, OW});
    for (int c = 0; c < C; ++c) {
        double bv = b.defined() ? b.value()[static_cast<std::size_t>(c)] : 0.0;
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                double acc = bv;
                for (int di = 0; di < kh; ++di) {
                    int iy = oy * stride - ph + di;
                    if (iy < 0 || iy >= H) continue;
                    for (int dj = 0; dj < kw; ++dj) {
                        int ix = ox * stride - pw_ + dj;
                        if (ix < 0 || ix >= W) continue;
                        acc += xv.at(c, iy, ix) * wv.at(c, di, dj);
                    }
                }
                out.at(c, oy, ox) = acc;
            }
    }

    std::vector<std::shared_ptr<Node>> parents{x.node(), w.node()};
    if (b.defined()) parents.push_back(b.node());
    auto n = make_node(std::move(out), std::move(parents));
    Node* self = n.get();
    auto px = x.node(), pw = w.node();
    auto pb = b.defined() ? b.node() : nullptr;
    n->backprop = [self, px, pw, pb, C, H, W, OH, OW, kh, kw, ph, pw_, stride] {
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    double g = self->grad.at(c, oy, ox);
                    if (g == 0.0) continue;
                    for (int di = 0; di < kh; ++di) {
                        int iy = oy * stride - ph + di;
                        if (iy < 0 || iy >= H) continue;
                        for (int dj = 0; dj < kw; ++dj) {
                            int ix = ox * stride - pw_ + dj;
                            if (ix < 0 || ix >= W) continue;
                            if (px->requires_grad)
                                grad_buf(px).at(c, iy, ix) += g * pw->value.at(c, di, dj);
                            if (pw->requires_grad)
                                grad_buf(pw).at(c, di, dj) += g * px->value.at(c, iy, ix);
                        }
                    }
                }
        if (pb && pb->requires_grad) {
            Tensor& gb = grad_buf(pb);
            for (int c = 0; c < C; ++c)
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox)
                        gb[static_cast<std::size_t>(c)] += self->grad.at(c, oy, ox);
        }
    };
    return Var(n);
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.value();
    check_or<DimensionMismatch>(xv.rank() == 3, "instance_norm: rank-3 input required");
    int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    int m = H * W;
    check_or<DimensionMismatch>(gamma.value().dim(0) == C && beta.value().dim(0) == C,
                                "instance_norm: gamma/beta mismatch");
    Tensor out({C, H, W}), xhat({C, H, W}), istd({C});
    for (int c = 0; c < C; ++c) {
        double mu = 0.0;
        for (int i = 0; i < m; ++i) mu += xv[static_cast<std::size_t>(c) * m + i];
        mu /= m;
        double var = 0.0;
        for (int i = 0; i < m; ++i) {
            double d = xv[static_cast<std::size_t>(c) * m + i] - mu;
            var += d * d;
        }
        var /= m;
        double is = 1.0 / std::sqrt(var + eps);
        istd[static_cast<std::size_t>(c)] = is;
        double g = gamma.value()[static_cast<std::size_t>(c)];
        double bb = beta.value()[static_cast<std::size_t>(c)];
        for (int i = 0; i < m; ++i) {
            double h = (xv[static_cast<std::size_t>(c) * m + i] - mu) * is;
            xhat[static_cast<std::size_t>(c) * m + i] = h;
            out[static_cast<std::size_t>(c) * m + i] = g * h + bb;
        }
    }
    auto n = make_node(std::move(out), {x.node(), gamma.node(), beta.node()});
    Node* self = n.get();
    auto px = x.node(), pg = gamma.node(), pb = beta.node();
    n->backprop = [self, px, pg, pb, xhat, istd, C, m] {
        for (int c = 0; c < C; ++c) {
            double g = pg->value[static_cast<std::size_t>(c)];
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (int i = 0; i < m; ++i) {
                double dh = self->grad[static_cast<std::size_t>(c) * m + i] * g;
                sum_dh += dh;
                sum_dh_h += dh * xhat[static_cast<std::size_t>(c) * m + i];
            }
            if (px->requires_grad) {
                Tensor& gx = grad_buf(px);
                double is = istd[static_cast<std::size_t>(c)];
                for (int i = 0; i < m; ++i) {
                    double dh = self->grad[static_cast<std::size_t>(c) * m + i] * g;
                    gx[static_cast<std::size_t>(c) * m + i] +=
                        is * (dh - sum_dh / m -
                              xhat[static_cast<std::size_t>(c) * m + i] * sum_dh_h / m);
                }
            }
            if (pg->requires_grad) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i)
                    acc += self->grad[static_cast<std::size_t>(c) * m + i] *
                           xhat[static_cast<std::size_t>(c) * m + i];
                grad_buf(pg)[static_cast<std::size_t>(c)] += acc;
            }
            if (pb->requires_grad) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i) acc += self->grad[static_cast<std::size_t>(c) * m + i];
                grad_buf(pb)[static_cast<std::size_t>(c)] += acc;
            }
        }
    };
    return Var(n);
}

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

Var reshape(const Var& x, std::vector<int> shape) {
    Tensor out = x.value().reshaped(shape);
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px] { accum(px, self->grad.reshaped(px->value.shape())); };
    return Var(n);
}

Var concat_rows(const VarList& xs) {
    check(!xs.empty(), "concat_rows: empty list");
    int D = xs[0].value().dim(1);
    int total = 0;
    std::vector<std::shared_ptr<Node>> parents;
    for (const auto& v : xs) {
        check_or<DimensionMismatch>(v.value().rank() == 2 && v.value().dim(1) == D,
                                    "concat_rows: column mismatch");
        total += v.value().dim(0);
        parents.push_back(v.node());
    }
    Tensor out({total, D});
    int r = 0;
    for (const auto& v : xs) {
        std::copy(v.value().data(), v.value().data() + v.value().size(),
                  out.data() + static_cast<std::size_t>(r) * D);
        r += v.value().dim(0);
    }
    auto n = make_node(std::move(out), parents);
    Node* self = n.get();
    n->backprop = [self, parents, D] {
        int r = 0;
        for (const auto& p : parents) {
            int rows = p->value.dim(0);
            if (p->requires_grad) {
                Tensor& g = grad_buf(p);
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += self->grad[static_cast<std::size_t>(r) * D + i];
            }
            r += rows;
        }
    };
    return Var(n);
}

Var slice_rows(const Var& x, int start, int len) {
    const Tensor& xv = x.value();
    check_or<DimensionMismatch>(xv.rank() == 2 && start >= 0 && start + len <= xv.dim(0),
                                "slice_rows: out of range");
    int D = xv.dim(1);
    Tensor out({len, D});
    std::copy(xv.data() + static_cast<std::size_t>(start) * D,
              xv.data() + static_cast<std::size_t>(start + len) * D, out.data());
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px, start, D] {
        Tensor& g = grad_buf(px);
        for (std::size_t i = 0; i < self->grad.size(); ++i)
            g[static_cast<std::size_t>(start) * D + i] += self->grad[i];
    };
    return Var(n);
}

Var concat_channels(const VarList& xs) {
    check(!xs.empty(), "concat_channels: empty list");
    int H = xs[0].value().dim(1), W = xs[0].value().dim(2);
    int total = 0;
    std::vector<std::shared_ptr<Node>> parents;
    for (const auto& v : xs) {
        check_or<DimensionMismatch>(
            v.value().rank() == 3 && v.value().dim(1) == H && v.value().dim(2) == W,
            "concat_channels: spatial mismatch");
        total += v.value().dim(0);
        parents.push_back(v.node());
    }
    Tensor out({total, H, W});
    std::size_t off = 0;
    for (const auto& v : xs) {
        std::copy(v.value().data(), v.value().data() + v.value().size(), out.data() + off);
        off += v.value().size();
    }
    auto n = make_node(std::move(out), parents);
    Node* self = n.get();
    n->backprop = [self, parents] {
        std::size_t off = 0;
        for (const auto& p : parents) {
            if (p->requires_grad) {
                Tensor& g = grad_buf(p);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[off + i];
            }
            off += p->value.size();
        }
    };
    return Var(n);
}

Var chw_to_tokens(const Var& x) {
    const Tensor& xv = x.value();
    check_or<DimensionMismatch>(xv.rank() == 3, "chw_to_tokens: rank-3 input required");
    int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    int N = H * W;
    Tensor out({N, C});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < N; ++i) out.at(i, c) = xv[static_cast<std::size_t>(c) * N + i];
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px, C, N] {
        Tensor& g = grad_buf(px);
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < N; ++i) g[static_cast<std::size_t>(c) * N + i] += self->grad.at(i, c);
    };
    return Var(n);
}

Var tokens_to_chw(const Var& x, int h, int w) {
    const Tensor& xv = x.value();
    check_or<DimensionMismatch>(xv.rank() == 2 && xv.dim(0) == h * w,
                                "tokens_to_chw: token count mismatch");
    int C = xv.dim(1), N = h * w;
    Tensor out({C, h, w});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < N; ++i) out[static_cast<std::size_t>(c) * N + i] = xv.at(i, c);
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px, C, N] {
        Tensor& g = grad_buf(px);
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < N; ++i) g.at(i, c) += self->grad[static_cast<std::size_t>(c) * N + i];
    };
    return Var(n);
}

// ---------------------------------------------------------------------------
// Resampling / pooling
// ---------------------------------------------------------------------------

namespace {

struct Tap {
    int index;
    double weight;
};

// Expands an out-of-range sample index through the odd-symmetric boundary
// rule v(-i) = 2 v(0) - v(i), v(n-1+i) = 2 v(n-1) - v(n-1-i). Exact for
// affine signals, which is what makes ramp images resample exactly.
void expand_boundary(int i, int n, double w, std::vector<Tap>& out, int depth = 0) {
    if (i >= 0 && i < n) {
        out.push_back({i, w});
        return;
    }
    if (depth > 8) {  // degenerate tiny inputs: clamp
        out.push_back({std::min(n - 1, std::max(0, i)), w});
        return;
    }
    if (i < 0) {
        expand_boundary(0, n, 2.0 * w, out, depth + 1);
        expand_boundary(-i, n, -w, out, depth + 1);
    } else {
        expand_boundary(n - 1, n, 2.0 * w, out, depth + 1);
        expand_boundary(2 * (n - 1) - i, n, -w, out, depth + 1);
    }
}

double keys_kernel(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
    return 0.0;
}

std::vector<std::vector<Tap>> bicubic_taps(int n_in, int n_out) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(n_out));
    double scl = static_cast<double>(n_in) / n_out;
    for (int o = 0; o < n_out; ++o) {
        double src = (o + 0.5) * scl - 0.5;
        int i0 = static_cast<int>(std::floor(src)) - 1;
        for (int t = 0; t < 4; ++t) {
            int i = i0 + t;
            double w = keys_kernel(src - i);
            if (w != 0.0) expand_boundary(i, n_in, w, taps[static_cast<std::size_t>(o)]);
        }
    }
    return taps;
}

std::vector<std::vector<Tap>> bilinear_taps(int n_in, int n_out) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(n_out));
    double scl = static_cast<double>(n_in) / n_out;
    for (int o = 0; o < n_out; ++o) {
        double src = (o + 0.5) * scl - 0.5;
        double cl = std::min(static_cast<double>(n_in - 1), std::max(0.0, src));
        int i0 = static_cast<int>(std::floor(cl));
        int i1 = std::min(n_in - 1, i0 + 1);
        double f = cl - i0;
        taps[static_cast<std::size_t>(o)].push_back({i0, 1.0 - f});
        if (f > 0.0) taps[static_cast<std::size_t>(o)].push_back({i1, f});
    }
    return taps;
}

Var separable_resize(const Var& x, int out_h, int out_w,
                     std::vector<std::vector<Tap>> ty, std::vector<std::vector<Tap>> tx) {
    const Tensor& xv = x.value();
    check_or<DimensionMismatch>(xv.rank() == 3, "resize: rank-3 input required");
    int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    auto ty_p = std::make_shared<std::vector<std::vector<Tap>>>(std::move(ty));
    auto tx_p = std::make_shared<std::vector<std::vector<Tap>>>(std::move(tx));
    Tensor out({C, out_h, out_w});
    for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = 0.0;
                for (const Tap& a : (*ty_p)[static_cast<std::size_t>(oy)])
                    for (const Tap& b : (*tx_p)[static_cast<std::size_t>(ox)])
                        acc += a.weight * b.weight * xv.at(c, a.index, b.index);
                out.at(c, oy, ox) = acc;
            }
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px, ty_p, tx_p, C, out_h, out_w] {
        if (!px->requires_grad) return;
        Tensor& g = grad_buf(px);
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < out_h; ++oy)
                for (int ox = 0; ox < out_w; ++ox) {
                    double gv = self->grad.at(c, oy, ox);
                    if (gv == 0.0) continue;
                    for (const Tap& a : (*ty_p)[static_cast<std::size_t>(oy)])
                        for (const Tap& b : (*tx_p)[static_cast<std::size_t>(ox)])
                            g.at(c, a.index, b.index) += gv * a.weight * b.weight;
                }
    };
    return Var(n);
}

}  // namespace

Var bilinear_resize(const Var& x, int out_h, int out_w) {
    return separable_resize(x, out_h, out_w, bilinear_taps(x.value().dim(1), out_h),
                            bilinear_taps(x.value().dim(2), out_w));
}

Var bicubic_resize(const Var& x, int out_h, int out_w) {
    return separable_resize(x, out_h, out_w, bicubic_taps(x.value().dim(1), out_h),
                            bicubic_taps(x.value().dim(2), out_w));
}

Var global_avg_pool(const Var& x) {
    const Tensor& xv = x.value();
    check_or<DimensionMismatch>(xv.rank() == 3, "global_avg_pool: rank-3 input required");
    int C = xv.dim(0), m = xv.dim(1) * xv.dim(2);
    Tensor out({C});
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += xv[static_cast<std::size_t>(c) * m + i];
        out[static_cast<std::size_t>(c)] = acc / m;
    }
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px, C, m] {
        Tensor& g = grad_buf(px);
        for (int c = 0; c < C; ++c) {
            double gv = self->grad[static_cast<std::size_t>(c)] / m;
            for (int i = 0; i < m; ++i) g[static_cast<std::size_t>(c) * m + i] += gv;
        }
    };
    return Var(n);
}

Var avg_pool_grid(const Var& x, int gh, int gw) {
    const Tensor& xv = x.value();
    check_or<DimensionMismatch>(xv.rank() == 3, "avg_pool_grid: rank-3 input required");
    int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    check_or<DimensionMismatch>(H % gh == 0 && W % gw == 0, "avg_pool_grid: indivisible grid");
    int bh = H / gh, bw = W / gw;
    Tensor out({C, gh, gw});
    for (int c = 0; c < C; ++c)
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx) {
                double acc = 0.0;
                for (int i = 0; i < bh; ++i)
                    for (int j = 0; j < bw; ++j) acc += xv.at(c, gy * bh + i, gx * bw + j);
                out.at(c, gy, gx) = acc / (bh * bw);
            }
    auto n = make_node(std::move(out), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px, C, gh, gw, bh, bw] {
        Tensor& g = grad_buf(px);
        for (int c = 0; c < C; ++c)
            for (int gy = 0; gy < gh; ++gy)
                for (int gx = 0; gx < gw; ++gx) {
                    double gv = self->grad.at(c, gy, gx) / (bh * bw);
                    for (int i = 0; i < bh; ++i)
                        for (int j = 0; j < bw; ++j) g.at(c, gy * bh + i, gx * bw + j) += gv;
                }
    };
    return Var(n);
}

Var scale_channels(const Var& x, const Var& s) {
    const Tensor& xv = x.value();
    check_or<DimensionMismatch>(xv.rank() == 3 && s.value().rank() == 1 &&
                                    s.value().dim(0) == xv.dim(0),
                                "scale_channels: shape mismatch");
    int C = xv.dim(0), m = xv.dim(1) * xv.dim(2);
    Tensor out = xv;
    for (int c = 0; c < C; ++c) {
        double sv = s.value()[static_cast<std::size_t>(c)];
        for (int i = 0; i < m; ++i) out[static_cast<std::size_t>(c) * m + i] *= sv;
    }
    auto n = make_node(std::move(out), {x.node(), s.node()});
    Node* self = n.get();
    auto px = x.node(), ps = s.node();
    n->backprop = [self, px, ps, C, m] {
        if (px->requires_grad) {
            Tensor& g = grad_buf(px);
            for (int c = 0; c < C; ++c) {
                double sv = ps->value[static_cast<std::size_t>(c)];
                for (int i = 0; i < m; ++i)
                    g[static_cast<std::size_t>(c) * m + i] +=
                        self->grad[static_cast<std::size_t>(c) * m + i] * sv;
            }
        }
        if (ps->requires_grad) {
            Tensor& g = grad_buf(ps);
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i)
                    acc += self->grad[static_cast<std::size_t>(c) * m + i] *
                           px->value[static_cast<std::size_t>(c) * m + i];
                g[static_cast<std::size_t>(c)] += acc;
            }
        }
    };
    return Var(n);
}

Var channel_dot(const Var& u, const Var& h, const Var& bias) {
    const Tensor& uv = u.value();
    check_or<DimensionMismatch>(uv.rank() == 3 && h.value().rank() == 1 &&
                                    h.value().dim(0) == uv.dim(0),
                                "channel_dot: shape mismatch");
    int C = uv.dim(0), H = uv.dim(1), W = uv.dim(2);
    int m = H * W;
    double b0 = bias.defined() ? bias.value()[0] : 0.0;
    Tensor out({H, W}, b0);
    for (int c = 0; c < C; ++c) {
        double hv = h.value()[static_cast<std::size_t>(c)];
        for (int i = 0; i < m; ++i) out[i] += hv * uv[static_cast<std::size_t>(c) * m + i];
    }
    std::vector<std::shared_ptr<Node>> parents{u.node(), h.node()};
    if (bias.defined()) parents.push_back(bias.node());
    auto n = make_node(std::move(out), std::move(parents));
    Node* self = n.get();
    auto pu = u.node(), ph = h.node();
    auto pb = bias.defined() ? bias.node() : nullptr;
    n->backprop = [self, pu, ph, pb, C, m] {
        if (pu->requires_grad) {
            Tensor& g = grad_buf(pu);
            for (int c = 0; c < C; ++c) {
                double hv = ph->value[static_cast<std::size_t>(c)];
                for (int i = 0; i < m; ++i)
                    g[static_cast<std::size_t>(c) * m + i] += self->grad[i] * hv;
            }
        }
        if (ph->requires_grad) {
            Tensor& g = grad_buf(ph);
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i)
                    acc += self->grad[i] * pu->value[static_cast<std::size_t>(c) * m + i];
                g[static_cast<std::size_t>(c)] += acc;
            }
        }
        if (pb && pb->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < self->grad.size(); ++i) acc += self->grad[i];
            grad_buf(pb)[0] += acc;
        }
    };
    return Var(n);
}

// ---------------------------------------------------------------------------
// Reductions / losses
// ---------------------------------------------------------------------------

Var mean_all(const Var& x) {
    double m = x.value().sum() / static_cast<double>(x.value().size());
    auto n = make_node(Tensor::scalar(m), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px] {
        if (!px->requires_grad) return;
        Tensor& g = grad_buf(px);
        double gv = self->grad[0] / static_cast<double>(px->value.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gv;
    };
    return Var(n);
}

Var sum_all(const Var& x) {
    auto n = make_node(Tensor::scalar(x.value().sum()), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    n->backprop = [self, px] {
        if (!px->requires_grad) return;
        Tensor& g = grad_buf(px);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[0];
    };
    return Var(n);
}

Var masked_mean(const Var& x, const Tensor& select) {
    check_or<DimensionMismatch>(x.value().same_shape(select), "masked_mean: shape mismatch");
    double acc = 0.0;
    std::size_t nsel = 0;
    for (std::size_t i = 0; i < select.size(); ++i)
        if (select[i] != 0.0) {
            acc += x.value()[i];
            ++nsel;
        }
    double m = nsel ? acc / static_cast<double>(nsel) : 0.0;
    auto n = make_node(Tensor::scalar(m), {x.node()});
    Node* self = n.get();
    auto px = x.node();
    auto sel = std::make_shared<Tensor>(select);
    n->backprop = [self, px, sel, nsel] {
        if (!px->requires_grad || nsel == 0) return;
        Tensor& g = grad_buf(px);
        double gv = self->grad[0] / static_cast<double>(nsel);
        for (std::size_t i = 0; i < g.size(); ++i)
            if ((*sel)[i] != 0.0) g[i] += gv;
    };
    return Var(n);
}

Var focal_loss_op(const Var& p, const Tensor& target, const Tensor& valid, double gamma,
                  double alpha, double eps) {
    check_or<DimensionMismatch>(p.value().same_shape(target) && p.value().same_shape(valid),
                                "focal_loss: shape mismatch");
    std::size_t nv = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < valid.size(); ++i) {
        if (valid[i] == 0.0) continue;
        ++nv;
        bool pos = target[i] != 0.0;
        double pc = std::min(1.0 - eps, std::max(eps, p.value()[i]));
        double pt = pos ? pc : 1.0 - pc;
        double at = pos ? alpha : 1.0 - alpha;
        acc += -at * std::pow(1.0 - pt, gamma) * std::log(pt);
    }
    double loss = nv ? acc / static_cast<double>(nv) : 0.0;
    auto n = make_node(Tensor::scalar(loss), {p.node()});
    Node* self = n.get();
    auto pp = p.node();
    auto tgt = std::make_shared<Tensor>(target);
    auto val = std::make_shared<Tensor>(valid);
    n->backprop = [self, pp, tgt, val, gamma, alpha, eps, nv] {
        if (!pp->requires_grad || nv == 0) return;
        Tensor& g = grad_buf(pp);
        double scale = self->grad[0] / static_cast<double>(nv);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if ((*val)[i] == 0.0) continue;
            double pv = pp->value[i];
            if (pv < eps || pv > 1.0 - eps) continue;  // clamped: zero gradient
            bool pos = (*tgt)[i] != 0.0;
            double pt = pos ? pv : 1.0 - pv;
            double at = pos ? alpha : 1.0 - alpha;
            double one_m = 1.0 - pt;
            double d_pt =
                -at * (std::pow(one_m, gamma) / pt -
                       (gamma > 0.0 ? gamma * std::pow(one_m, gamma - 1.0) * std::log(pt) : 0.0));
            g[i] += scale * (pos ? d_pt : -d_pt);
        }
    };
    return Var(n);
}

Var bce_scalar(const Var& yhat, double y, double eps) {
    check(yhat.value().size() == 1, "bce_scalar: scalar prediction required");
    double v = yhat.value()[0];
    double vc = std::min(1.0 - eps, std::max(eps, v));
    double loss = -(y * std::log(vc) + (1.0 - y) * std::log(1.0 - vc));
    auto n = make_node(Tensor::scalar(loss), {yhat.node()});
    Node* self = n.get();
    auto py = yhat.node();
    n->backprop = [self, py, y, eps] {
        if (!py->requires_grad) return;
        double v = py->value[0];
        if (v < eps || v > 1.0 - eps) return;
        double d = -(y / v) + (1.0 - y) / (1.0 - v);
        grad_buf(py)[0] += self->grad[0] * d;
    };
    return Var(n);
}

}  // namespace imdp::ad
