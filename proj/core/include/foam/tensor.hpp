#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "foam/error.hpp"

namespace foam {

// Dense row-major fp32 tensor. Rank 0..2 is what the models use; the ops
// treat the last axis as columns and collapse leading axes into rows.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float value);
    static Tensor scalar(float value) { return Tensor({1}, {value}); }
    static Tensor row(std::vector<float> values);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    // Last-axis size; leading axes collapse to rows().
    int cols() const { return shape.empty() ? 1 : shape.back(); }
    int rows() const {
        int64_t r = 1;
        for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
        return static_cast<int>(r);
    }

    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
};

int64_t shape_numel(std::span<const int> shape);
std::string shape_str(std::span<const int> shape);

} // namespace foam
