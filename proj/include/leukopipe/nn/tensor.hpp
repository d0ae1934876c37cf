#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace leukopipe::nn {

/// Dense float tensor, row-major. Activations are NCHW or N x D.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, float fill = 0.0f);
    Tensor(std::vector<int> shape, std::vector<float> values);

    const std::vector<int>& shape() const noexcept { return shape_; }
    int dim(std::size_t i) const { return shape_.at(i); }
    std::size_t ndim() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    void fill(float v);
    /// Same element count, new shape.
    Tensor reshaped(std::vector<int> shape) const;

    bool operator==(const Tensor&) const = default;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

std::size_t numel(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

/// Throws ShapeMismatch naming `what` unless the shapes agree.
void check_shape(const Tensor& t, const std::vector<int>& expected, const char* what);

}  // namespace leukopipe::nn
