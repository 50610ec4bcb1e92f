// Dense row-major tensor of doubles. The whole model runs in double
// precision: desk-scale shapes make the cost irrelevant and finite-difference
// gradient checks stay clean.

#pragma once

#include <initializer_list>
#include <numeric>
#include <vector>

#include "imdp/common.hpp"

namespace imdp {

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_or<DimensionMismatch>(data_.size() == count(shape_),
                                    "tensor data does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Indexed access for the shapes used throughout: (H,W), (C,H,W), (N,D).
    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }
    double& at(int c, int i, int j) {
        return data_[(static_cast<std::size_t>(c) * dim(1) + i) * dim(2) + j];
    }
    double at(int c, int i, int j) const {
        return data_[(static_cast<std::size_t>(c) * dim(1) + i) * dim(2) + j];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double min() const {
        double m = data_.empty() ? 0.0 : data_[0];
        for (double v : data_) m = std::min(m, v);
        return m;
    }

    double max() const {
        double m = data_.empty() ? 0.0 : data_[0];
        for (double v : data_) m = std::max(m, v);
        return m;
    }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    Tensor reshaped(std::vector<int> shape) const {
        check_or<DimensionMismatch>(count(shape) == data_.size(), "reshape changes element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    /// In-place elementwise helpers used by optimizer and tests.
    Tensor& operator+=(const Tensor& o) {
        check_or<DimensionMismatch>(same_shape(o), "tensor += shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

private:
    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            check_or<DimensionMismatch>(d > 0, "tensor dims must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace imdp
