#pragma once

#include <cassert>
#include <cmath>
#include <numeric>
#include <vector>

#include "densedet/common.hpp"

namespace densedet {

// Dense row-major float tensor. Shapes are small and known at call sites;
// this is storage plus bounds-checked indexing in debug builds.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(numel(), 0.0f);
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[size_t(i)]; }

    size_t numel() const {
        size_t n = 1;
        for (int d : shape_) n *= size_t(d);
        return n;
    }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](size_t i) { return data_[i]; }
    float operator[](size_t i) const { return data_[i]; }

    float& at(int i, int j) { return data_[size_t(i) * shape_[1] + j]; }
    float at(int i, int j) const { return data_[size_t(i) * shape_[1] + j]; }

    float& at(int i, int j, int k) {
        return data_[(size_t(i) * shape_[1] + j) * shape_[2] + k];
    }
    float at(int i, int j, int k) const {
        return data_[(size_t(i) * shape_[1] + j) * shape_[2] + k];
    }

    float& at(int i, int j, int k, int l) {
        return data_[((size_t(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    float at(int i, int j, int k, int l) const {
        return data_[((size_t(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor& o) const {
        return shape_ == o.shape_ && data_ == o.data_;
    }

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

}  // namespace densedet
