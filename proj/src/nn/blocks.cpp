#include "leukopipe/nn/blocks.hpp"

#include <cmath>

#include "leukopipe/error.hpp"

namespace leukopipe::nn {

ModulePtr conv_bn_act(int in, int out, int kernel, int stride, int groups, Activation act, float bn_eps) {
    auto seq = std::make_unique<Sequential>();
    seq->add(std::make_unique<Conv2d>(in, out, kernel, stride, (kernel - 1) / 2, groups, false));
    seq->add(std::make_unique<BatchNorm2d>(out, bn_eps));
    if (act == Activation::ReLU) seq->add(std::make_unique<ReLU>());
    if (act == Activation::SiLU) seq->add(std::make_unique<SiLU>());
    return seq;
}

// --- SqueezeExcitation -----------------------------------------------------------

SqueezeExcitation::SqueezeExcitation(int channels, int squeeze_channels)
    : fc1_(channels, squeeze_channels, 1, 1, 0, 1, true), fc2_(squeeze_channels, channels, 1, 1, 0, 1, true) {}

void SqueezeExcitation::visit(const std::string& prefix, const ParameterVisitor& fn) {
    fc1_.visit(prefix + "fc1.", fn);
    fc2_.visit(prefix + "fc2.", fn);
}

void SqueezeExcitation::init(Rng& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
}

Tensor SqueezeExcitation::forward(const Tensor& x, ForwardContext& ctx) {
    input_ = x;
    scale_ = gate_.forward(fc2_.forward(act_.forward(fc1_.forward(pool_.forward(x, ctx), ctx), ctx), ctx), ctx);
    const int nc = x.dim(0) * x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor y = x;
    for (int p = 0; p < nc; ++p)
        for (std::size_t i = 0; i < hw; ++i) y[p * hw + i] *= scale_[p];
    return y;
}

Tensor SqueezeExcitation::backward(const Tensor& g) {
    const int n = input_.dim(0), c = input_.dim(1);
    const std::size_t hw = static_cast<std::size_t>(input_.dim(2)) * input_.dim(3);
    Tensor dx = g;
    Tensor dscale({n, c, 1, 1});
    for (int p = 0; p < n * c; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            acc += g[p * hw + i] * input_[p * hw + i];
            dx[p * hw + i] *= scale_[p];
        }
        dscale[p] = static_cast<float>(acc);
    }
    const Tensor dpool = pool_.backward(fc1_.backward(act_.backward(fc2_.backward(gate_.backward(dscale)))));
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dpool[i];
    return dx;
}

// --- MBConv --------------------------------------------------------------------------

MBConv::MBConv(int in, int out, int expand_ratio, int kernel, int stride, float stochastic_depth_p)
    : residual_(stride == 1 && in == out), drop_path_(stochastic_depth_p) {
    const int expanded = make_divisible(static_cast<double>(in) * expand_ratio);
    if (expanded != in) block_.add(conv_bn_act(in, expanded, 1, 1, 1, Activation::SiLU));
    block_.add(conv_bn_act(expanded, expanded, kernel, stride, expanded, Activation::SiLU));
    block_.add(std::make_unique<SqueezeExcitation>(expanded, std::max(1, in / 4)));
    block_.add(conv_bn_act(expanded, out, 1, 1, 1, Activation::None));
}

void MBConv::visit(const std::string& prefix, const ParameterVisitor& fn) { block_.visit(prefix + "block.", fn); }

void MBConv::init(Rng& rng) { block_.init(rng); }

Tensor MBConv::forward(const Tensor& x, ForwardContext& ctx) {
    Tensor y = block_.forward(x, ctx);
    if (!residual_) return y;
    y = drop_path_.forward(y, ctx);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    return y;
}

Tensor MBConv::backward(const Tensor& g) {
    if (!residual_) return block_.backward(g);
    Tensor dx = block_.backward(drop_path_.backward(g));
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
    return dx;
}

// --- Bottleneck ------------------------------------------------------------------------

Bottleneck::Bottleneck(int in, int planes, int stride) {
    const int out = planes * kExpansion;
    main_.add("conv1", std::make_unique<Conv2d>(in, planes, 1, 1, 0));
    main_.add("bn1", std::make_unique<BatchNorm2d>(planes));
    main_.add("relu1", std::make_unique<ReLU>());
    main_.add("conv2", std::make_unique<Conv2d>(planes, planes, 3, stride, 1));
    main_.add("bn2", std::make_unique<BatchNorm2d>(planes));
    main_.add("relu2", std::make_unique<ReLU>());
    main_.add("conv3", std::make_unique<Conv2d>(planes, out, 1, 1, 0));
    main_.add("bn3", std::make_unique<BatchNorm2d>(out));
    if (stride != 1 || in != out) {
        downsample_ = std::make_unique<Sequential>();
        downsample_->add(std::make_unique<Conv2d>(in, out, 1, stride, 0));
        downsample_->add(std::make_unique<BatchNorm2d>(out));
    }
}

void Bottleneck::visit(const std::string& prefix, const ParameterVisitor& fn) {
    main_.visit(prefix, fn);
    if (downsample_) downsample_->visit(prefix + "downsample.", fn);
}

void Bottleneck::init(Rng& rng) {
    main_.init(rng);
    if (downsample_) downsample_->init(rng);
}

Tensor Bottleneck::forward(const Tensor& x, ForwardContext& ctx) {
    Tensor y = main_.forward(x, ctx);
    const Tensor identity = downsample_ ? downsample_->forward(x, ctx) : x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += identity[i];
    return out_relu_.forward(y, ctx);
}

Tensor Bottleneck::backward(const Tensor& grad_out) {
    const Tensor g = out_relu_.backward(grad_out);
    Tensor dx = main_.backward(g);
    const Tensor did = downsample_ ? downsample_->backward(g) : g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += did[i];
    return dx;
}

// --- backbones -------------------------------------------------------------------------

int make_divisible(double value, int divisor) {
    int v = std::max(divisor, static_cast<int>(value + divisor / 2.0) / divisor * divisor);
    if (v < 0.9 * value) v += divisor;
    return v;
}

ModulePtr make_resnet_features(const std::vector<int>& blocks_per_stage) {
    if (blocks_per_stage.size() != 4) throw Error(ErrorCode::InvalidConfig, "ResNet needs four stages");
    auto net = std::make_unique<Sequential>();
    net->add("conv1", std::make_unique<Conv2d>(3, 64, 7, 2, 3));
    net->add("bn1", std::make_unique<BatchNorm2d>(64));
    net->add("relu", std::make_unique<ReLU>());
    net->add("maxpool", std::make_unique<MaxPool2d>(3, 2, 1));
    int in = 64;
    const int planes[4] = {64, 128, 256, 512};
    for (int s = 0; s < 4; ++s) {
        auto stage = std::make_unique<Sequential>();
        for (int b = 0; b < blocks_per_stage[s]; ++b) {
            const int stride = (b == 0 && s > 0) ? 2 : 1;
            stage->add(std::make_unique<Bottleneck>(in, planes[s], stride));
            in = planes[s] * Bottleneck::kExpansion;
        }
        net->add("layer" + std::to_string(s + 1), std::move(stage));
    }
    net->add("avgpool", std::make_unique<GlobalAvgPool>());
    return net;
}

ModulePtr make_efficientnet_features(double width_mult, double depth_mult) {
    struct StageConf {
        int expand, kernel, stride, in, out, layers;
    };
    const StageConf base[] = {{1, 3, 1, 32, 16, 1},  {6, 3, 2, 16, 24, 2},  {6, 5, 2, 24, 40, 2},
                              {6, 3, 2, 40, 80, 3},  {6, 5, 1, 80, 112, 3}, {6, 5, 2, 112, 192, 4},
                              {6, 3, 1, 192, 320, 1}};
    auto adjust = [&](int c) { return make_divisible(c * width_mult); };
    auto depth = [&](int n) { return static_cast<int>(std::ceil(n * depth_mult)); };

    int total_blocks = 0;
    for (const auto& s : base) total_blocks += depth(s.layers);

    auto features = std::make_unique<Sequential>();
    features->add(conv_bn_act(3, adjust(base[0].in), 3, 2, 1, Activation::SiLU));
    int block_id = 0;
    for (const auto& s : base) {
        auto stage = std::make_unique<Sequential>();
        const int n = depth(s.layers);
        for (int i = 0; i < n; ++i) {
            const int in = i == 0 ? adjust(s.in) : adjust(s.out);
            const int stride = i == 0 ? s.stride : 1;
            const float sd = 0.2f * static_cast<float>(block_id) / static_cast<float>(total_blocks);
            stage->add(std::make_unique<MBConv>(in, adjust(s.out), s.expand, s.kernel, stride, sd));
            ++block_id;
        }
        features->add(std::move(stage));
    }
    const int last_in = adjust(base[6].out);
    features->add(conv_bn_act(last_in, 4 * last_in, 1, 1, 1, Activation::SiLU));

    auto net = std::make_unique<Sequential>();
    net->add("features", std::move(features));
    net->add("avgpool", std::make_unique<GlobalAvgPool>());
    return net;
}

ModulePtr make_tiny_cnn_features() {
    auto features = std::make_unique<Sequential>();
    features->add(conv_bn_act(3, 8, 3, 2, 1, Activation::ReLU));
    features->add(conv_bn_act(8, 16, 3, 2, 1, Activation::ReLU));
    features->add(conv_bn_act(16, 32, 3, 2, 1, Activation::ReLU));
    auto net = std::make_unique<Sequential>();
    net->add("features", std::move(features));
    net->add("avgpool", std::make_unique<GlobalAvgPool>());
    return net;
}

}  // namespace leukopipe::nn
