#include "foam/tensor.hpp"

namespace foam {

int64_t shape_numel(std::span<const int> shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(std::span<const int> shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

Tensor Tensor::zeros(std::vector<int> shape) {
    int64_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    int64_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), value));
}

Tensor Tensor::row(std::vector<float> values) {
    int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values));
}

std::string Tensor::shape_str() const { return foam::shape_str(shape); }

} // namespace foam
