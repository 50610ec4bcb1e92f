#include "imdp/noise_views.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#ifndef IMDP_DATA_DIR
#define IMDP_DATA_DIR "data"
#endif

namespace imdp::noise {

namespace {

int mirror(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        if (n == 1) return 0;
    }
    return i;
}

// Cross-correlation of a single-channel image with one kernel, reflect-101
// padding, same output size.
void correlate_into(const Tensor& img, int H, int W, const Tensor& kernel, double* out) {
    int ks = kernel.dim(0);
    int r = ks / 2;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int di = 0; di < ks; ++di) {
                int iy = mirror(y - r + di, H);
                for (int dj = 0; dj < ks; ++dj) {
                    int ix = mirror(x - r + dj, W);
                    acc += img[static_cast<std::size_t>(iy) * W + ix] * kernel.at(di, dj);
                }
            }
            out[static_cast<std::size_t>(y) * W + x] = acc;
        }
}

}  // namespace

std::string data_file(const std::string& name) {
    if (const char* env = std::getenv("IMDP_DATA_DIR")) return std::string(env) + "/" + name;
    return std::string(IMDP_DATA_DIR) + "/" + name;
}

SrmKernels SrmKernels::load(const std::string& path) {
    std::ifstream in(path);
    check_or<DataError>(in.good(), "cannot open SRM kernel file: " + path);
    SrmKernels set;
    std::string line;
    std::vector<double> coeffs;
    double scale = 1.0;
    auto flush = [&] {
        if (coeffs.empty()) return;
        check_or<DataError>(coeffs.size() == 25, "SRM kernel must have 25 coefficients");
        Tensor k({5, 5});
        for (std::size_t i = 0; i < 25; ++i) k[i] = coeffs[i] / scale;
        double s = k.sum();
        check_or<DataError>(std::abs(s) < 1e-12, "SRM kernel coefficients must sum to 0");
        set.kernels_.push_back(std::move(k));
        coeffs.clear();
    };
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        if (first == "scale") {
            flush();
            ls >> scale;
            check_or<DataError>(scale != 0.0, "SRM kernel scale must be nonzero");
        } else {
            coeffs.push_back(std::stod(first));
            double v;
            while (ls >> v) coeffs.push_back(v);
        }
    }
    flush();
    check_or<DataError>(!set.kernels_.empty(), "SRM kernel file is empty");
    return set;
}

const SrmKernels& SrmKernels::standard() {
    static SrmKernels set = load(data_file("srm_kernels.txt"));
    return set;
}

Tensor hwc_to_chw(const Tensor& hwc) {
    check_or<DimensionMismatch>(hwc.rank() == 3, "hwc_to_chw: rank-3 input required");
    int H = hwc.dim(0), W = hwc.dim(1), C = hwc.dim(2);
    Tensor out({C, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) out.at(c, y, x) = hwc.at(y, x, c);
    return out;
}

Tensor chw_to_hwc(const Tensor& chw) {
    check_or<DimensionMismatch>(chw.rank() == 3, "chw_to_hwc: rank-3 input required");
    int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    Tensor out({H, W, C});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) out.at(y, x, c) = chw.at(c, y, x);
    return out;
}

Tensor srm_extract_chw(const Tensor& image_chw, const SrmKernels& kernels) {
    check_or<DimensionMismatch>(image_chw.rank() == 3 && image_chw.dim(0) == 3,
                                "srm_extract: (3,H,W) input required");
    int H = image_chw.dim(1), W = image_chw.dim(2);
    Tensor summed({H, W});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < H * W; ++i)
            summed[static_cast<std::size_t>(i)] += image_chw[static_cast<std::size_t>(c) * H * W + i];
    Tensor out({kernels.count(), H, W});
    for (int k = 0; k < kernels.count(); ++k)
        correlate_into(summed, H, W, kernels.kernel(k),
                       out.data() + static_cast<std::size_t>(k) * H * W);
    return out;
}

Tensor srm_extract(const Tensor& image_hwc, const SrmKernels& kernels) {
    check_or<DimensionMismatch>(image_hwc.rank() == 3 && image_hwc.dim(2) == 3,
                                "srm_extract: (H,W,3) input required");
    return srm_extract_chw(hwc_to_chw(image_hwc), kernels);
}

// ---------------------------------------------------------------------------

BayarKernelSet::BayarKernelSet(int k, int kernel_size, Rng& rng) {
    Tensor w({k, 1, kernel_size, kernel_size});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, 0.2);
    weights_ = Var::param(std::move(w), "bayar.w");
}

bool BayarKernelSet::projected(double tol) const {
    const Tensor& w = weights_.value();
    int K = w.dim(0), ks = w.dim(2);
    int cy = ks / 2, cx = ks / 2;
    for (int k = 0; k < K; ++k) {
        double center = 0.0, others = 0.0;
        for (int i = 0; i < ks; ++i)
            for (int j = 0; j < ks; ++j) {
                double v = w[((static_cast<std::size_t>(k) * 1 + 0) * ks + i) * ks + j];
                if (i == cy && j == cx)
                    center = v;
                else
                    others += v;
            }
        if (std::abs(center + 1.0) > tol || std::abs(others - 1.0) > tol) return false;
    }
    return true;
}

namespace {

// Projects one kernel in place; returns false when degenerate.
bool project_kernel(Tensor& w, int k, int ks) {
    int cy = ks / 2, cx = ks / 2;
    double others = 0.0;
    bool finite = true;
    for (int i = 0; i < ks; ++i)
        for (int j = 0; j < ks; ++j) {
            double v = w[(static_cast<std::size_t>(k) * ks + i) * ks + j];
            if (!std::isfinite(v)) finite = false;
            if (!(i == cy && j == cx)) others += v;
        }
    if (!finite || others == 0.0 || !std::isfinite(others)) return false;
    bool rescale = std::abs(others - 1.0) > 1e-12;  // exact fixed point otherwise
    for (int i = 0; i < ks; ++i)
        for (int j = 0; j < ks; ++j) {
            std::size_t idx = (static_cast<std::size_t>(k) * ks + i) * ks + j;
            if (i == cy && j == cx)
                w[idx] = -1.0;
            else if (rescale)
                w[idx] /= others;
        }
    return true;
}

}  // namespace

BayarKernelSet& bayar_project(BayarKernelSet& kernels) {
    Tensor& w = kernels.weights().mutable_value();
    int K = w.dim(0), ks = w.dim(2);
    for (int k = 0; k < K; ++k)
        check_or<DegenerateKernel>(project_kernel(w, k, ks),
                                   "bayar kernel has zero or non-finite off-center sum");
    return kernels;
}

BayarKernelSet& bayar_project_or_reinit(BayarKernelSet& kernels, Rng& rng) {
    Tensor& w = kernels.weights().mutable_value();
    int K = w.dim(0), ks = w.dim(2);
    for (int k = 0; k < K; ++k) {
        if (project_kernel(w, k, ks)) continue;
        for (int i = 0; i < ks; ++i)
            for (int j = 0; j < ks; ++j)
                w[(static_cast<std::size_t>(k) * ks + i) * ks + j] = rng.normal(0.0, 0.2);
        check_or<DegenerateKernel>(project_kernel(w, k, ks), "bayar re-init still degenerate");
    }
    return kernels;
}

Tensor grayscale_601(const Tensor& image_chw) {
    check_or<DimensionMismatch>(image_chw.rank() == 3 && image_chw.dim(0) == 3,
                                "grayscale_601: (3,H,W) input required");
    int H = image_chw.dim(1), W = image_chw.dim(2);
    int n = H * W;
    Tensor out({1, H, W});
    const double* r = image_chw.data();
    const double* g = r + n;
    const double* b = g + n;
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    return out;
}

Var bayar_forward(const Tensor& image_chw, const BayarKernelSet& kernels) {
    check_or<UnprojectedKernel>(kernels.projected(), "bayar kernels must be projected first");
    Var gray = Var::constant(grayscale_601(image_chw));
    return ad::conv2d(gray, kernels.weights(), Var(), 1, ad::Pad::Reflect);
}

Tensor bayar_extract(const Tensor& image_hwc, const BayarKernelSet& kernels) {
    check_or<DimensionMismatch>(image_hwc.rank() == 3 && image_hwc.dim(2) == 3,
                                "bayar_extract: (H,W,3) input required");
    return bayar_forward(hwc_to_chw(image_hwc), kernels).value();
}

// ---------------------------------------------------------------------------

NoiseprintSurrogate::NoiseprintSurrogate(int hidden, Rng& rng)
    : in_(3, hidden, 3, 1, rng),
      mid1_(hidden, hidden, 3, 1, rng),
      mid2_(hidden, hidden, 3, 1, rng),
      mid3_(hidden, hidden, 3, 1, rng),
      out_(hidden, 1, 3, 1, rng) {}

Var NoiseprintSurrogate::forward(const Var& image_chw) const {
    Var z = ad::gelu(in_.forward(image_chw));
    z = ad::add(z, ad::gelu(mid1_.forward(z)));
    z = ad::add(z, ad::gelu(mid2_.forward(z)));
    z = ad::add(z, ad::gelu(mid3_.forward(z)));
    return out_.forward(z);
}

Tensor NoiseprintSurrogate::extract(const Tensor& image_hwc) const {
    return forward(Var::constant(hwc_to_chw(image_hwc))).value();
}

void NoiseprintSurrogate::collect(const std::string& prefix, nn::ParamList& out) const {
    in_.collect(prefix + ".in", out);
    mid1_.collect(prefix + ".mid1", out);
    mid2_.collect(prefix + ".mid2", out);
    mid3_.collect(prefix + ".mid3", out);
    out_.collect(prefix + ".out", out);
}

}  // namespace imdp::noise
