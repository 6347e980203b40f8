#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stad/errors.hpp"

namespace stad {

// Dense float32 tensor, row-major, channels-first for image-like data (C,H,W).
// Copies are shallow (storage is shared); use clone() for a deep copy. All
// routines in this library treat tensors as immutable after construction
// except the optimizer, which updates parameter values in place.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<float>>(count_(shape_), 0.0f)) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, float v) {
        Tensor t(std::move(shape));
        for (auto& x : *t.data_) x = v;
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<float> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (count_(t.shape_) != static_cast<int64_t>(data.size()))
            throw ShapeError("tensor data length does not match shape");
        t.data_ = std::make_shared<std::vector<float>>(std::move(data));
        return t;
    }

    static Tensor scalar(float v) { return from({1}, {v}); }

    bool defined() const { return data_ != nullptr; }
    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    float* data() { return data_->data(); }
    const float* data() const { return data_->data(); }
    float& at(int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    float at(int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

    // Scalar convenience for [1]-shaped tensors.
    float item() const {
        if (numel() != 1) throw ShapeError("item() on non-scalar tensor");
        return (*data_)[0];
    }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<float>>(*data_);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool shares_storage(const Tensor& o) const { return data_ == o.data_; }

    static std::string shape_str(const std::vector<int>& s);

private:
    static int64_t count_(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::shared_ptr<std::vector<float>> data_;
};

bool all_finite(const Tensor& t);

// Throws NumericError naming `what` if any element is NaN or +-Inf.
void require_finite(const Tensor& t, const char* what);

void require_shape(const Tensor& t, const std::vector<int>& shape, const char* what);

}  // namespace stad
