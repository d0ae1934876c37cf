#include "leukopipe/nn/tensor.hpp"

#include <algorithm>

#include "leukopipe/error.hpp"

namespace leukopipe::nn {

std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw Error(ErrorCode::ShapeMismatch, "negative dimension in " + shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<int> shape, float fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != numel(shape_))
        throw Error(ErrorCode::ShapeMismatch, "value count does not match shape " + shape_string(shape_));
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (numel(shape) != data_.size())
        throw Error(ErrorCode::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

void check_shape(const Tensor& t, const std::vector<int>& expected, const char* what) {
    if (t.shape() != expected)
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(what) + ": expected " + shape_string(expected) + ", got " + shape_string(t.shape()));
}

}  // namespace leukopipe::nn
