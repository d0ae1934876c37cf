#pragma once

#include "leukopipe/nn/layers.hpp"

namespace leukopipe::nn {

enum class Activation { None, ReLU, SiLU };

/// conv -> batch norm -> optional activation, children named "0", "1", "2".
ModulePtr conv_bn_act(int in, int out, int kernel, int stride, int groups, Activation act, float bn_eps = 1e-5f);

/// Channel gating: x * sigmoid(fc2(silu(fc1(avgpool(x))))).
class SqueezeExcitation : public Module {
public:
    SqueezeExcitation(int channels, int squeeze_channels);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    void visit(const std::string& prefix, const ParameterVisitor& fn) override;
    void init(Rng& rng) override;

private:
    GlobalAvgPool pool_{true};
    Conv2d fc1_, fc2_;
    SiLU act_;
    Sigmoid gate_;
    Tensor input_, scale_;
};

/// EfficientNet inverted-residual block (expand, depthwise, SE, project).
class MBConv : public Module {
public:
    MBConv(int in, int out, int expand_ratio, int kernel, int stride, float stochastic_depth_p);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    void visit(const std::string& prefix, const ParameterVisitor& fn) override;
    void init(Rng& rng) override;

private:
    bool residual_;
    Sequential block_;
    StochasticDepth drop_path_;
};

/// ResNet v1.5 bottleneck (stride on the 3x3 conv), expansion 4.
class Bottleneck : public Module {
public:
    Bottleneck(int in, int planes, int stride);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    void visit(const std::string& prefix, const ParameterVisitor& fn) override;
    void init(Rng& rng) override;

    static constexpr int kExpansion = 4;

private:
    Sequential main_;
    std::unique_ptr<Sequential> downsample_;
    ReLU out_relu_;
};

/// Rounds channels * width to a multiple of 8 (never below 90% of it).
int make_divisible(double value, int divisor = 8);

/// Feature extractors ending in global average pooling (N x feature_dim).
/// Parameter names follow the torchvision layouts.
ModulePtr make_resnet_features(const std::vector<int>& blocks_per_stage);
ModulePtr make_efficientnet_features(double width_mult, double depth_mult);
/// Three stride-2 conv/BN/ReLU stages with 8, 16 and 32 channels.
ModulePtr make_tiny_cnn_features();

}  // namespace leukopipe::nn
