#pragma once

#include "leukopipe/nn/module.hpp"

namespace leukopipe::nn {

/// 2-D convolution over NCHW input. Supports groups == 1 and depthwise
/// (groups == in == out). Weight layout [out, in/groups, k, k].
class Conv2d : public Module {
public:
    Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int padding = 0, int groups = 1,
           bool bias = false);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    void visit(const std::string& prefix, const ParameterVisitor& fn) override;
    /// Kaiming normal, fan-out mode; zero bias.
    void init(Rng& rng) override;

    Parameter& weight() { return weight_; }
    Parameter* bias() { return has_bias_ ? &bias_ : nullptr; }

private:
    int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }
    Tensor forward_dense(const Tensor& x);
    Tensor forward_depthwise(const Tensor& x);
    Tensor backward_dense(const Tensor& g);
    Tensor backward_depthwise(const Tensor& g);

    int in_, out_, kernel_, stride_, padding_, groups_;
    bool has_bias_;
    Parameter weight_;
    Parameter bias_;
    Tensor input_;
};

class BatchNorm2d : public Module {
public:
    explicit BatchNorm2d(int channels, float eps = 1e-5f, float momentum = 0.1f);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    void visit(const std::string& prefix, const ParameterVisitor& fn) override;
    void init(Rng& rng) override;

private:
    int channels_;
    float eps_, momentum_;
    Parameter weight_, bias_, running_mean_, running_var_;
    Tensor xhat_;
    std::vector<float> inv_std_;
    bool trained_pass_ = false;
};

class ReLU : public Module {
public:
    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor output_;
};

class SiLU : public Module {
public:
    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor input_;
};

class Sigmoid : public Module {
public:
    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor output_;
};

class MaxPool2d : public Module {
public:
    MaxPool2d(int kernel, int stride, int padding) : kernel_(kernel), stride_(stride), padding_(padding) {}

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    int kernel_, stride_, padding_;
    std::vector<int> input_shape_;
    std::vector<std::size_t> argmax_;
};

/// NCHW -> N x C (keep_spatial=false) or N x C x 1 x 1.
class GlobalAvgPool : public Module {
public:
    explicit GlobalAvgPool(bool keep_spatial = false) : keep_spatial_(keep_spatial) {}

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    bool keep_spatial_;
    std::vector<int> input_shape_;
};

/// y = x W^T + b over N x in. Weight layout [out, in].
class Linear : public Module {
public:
    Linear(int in_features, int out_features);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    void visit(const std::string& prefix, const ParameterVisitor& fn) override;
    /// Uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
    void init(Rng& rng) override;

    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

private:
    int in_, out_;
    Parameter weight_, bias_;
    Tensor input_;
};

/// Inverted dropout; identity outside training.
class Dropout : public Module {
public:
    explicit Dropout(float p) : p_(p) {}

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    float p_;
    std::vector<float> mask_;
};

/// Drops whole samples of a residual branch with probability p during
/// training, rescaling survivors by 1/(1-p).
class StochasticDepth : public Module {
public:
    explicit StochasticDepth(float p) : p_(p) {}

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    float p_;
    std::vector<float> scale_;
};

}  // namespace leukopipe::nn
