#include "leukopipe/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "leukopipe/error.hpp"

namespace leukopipe::nn {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void require_training_rng(const ForwardContext& ctx, const char* who) {
    if (ctx.training && ctx.rng == nullptr)
        throw Error(ErrorCode::InvalidConfig, std::string(who) + " needs a random source in training mode");
}

void require_4d(const Tensor& x, int channels, const char* who) {
    if (x.ndim() != 4 || x.dim(1) != channels)
        throw Error(ErrorCode::ShapeMismatch, std::string(who) + ": expected N x " + std::to_string(channels) +
                                                  " x H x W input, got " + shape_string(x.shape()));
}

}  // namespace

// --- Sequential ----------------------------------------------------------------

Sequential& Sequential::add(std::string name, ModulePtr module) {
    children_.emplace_back(std::move(name), std::move(module));
    return *this;
}

Tensor Sequential::forward(const Tensor& x, ForwardContext& ctx) {
    Tensor h = x;
    for (auto& [name, child] : children_) h = child->forward(h, ctx);
    return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = children_.rbegin(); it != children_.rend(); ++it) g = it->second->backward(g);
    return g;
}

void Sequential::visit(const std::string& prefix, const ParameterVisitor& fn) {
    for (auto& [name, child] : children_) child->visit(prefix + name + ".", fn);
}

void Sequential::init(Rng& rng) {
    for (auto& [name, child] : children_) child->init(rng);
}

std::vector<std::pair<std::string, Parameter*>> named_parameters(Module& module, const std::string& prefix) {
    std::vector<std::pair<std::string, Parameter*>> out;
    module.visit(prefix, [&](const std::string& name, Parameter& p) { out.emplace_back(name, &p); });
    return out;
}

// --- Conv2d ----------------------------------------------------------------------

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, int groups, bool bias)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      groups_(groups),
      has_bias_(bias) {
    if (!(groups == 1 || (groups == in_channels && groups == out_channels)))
        throw Error(ErrorCode::InvalidConfig, "Conv2d supports groups == 1 or depthwise only");
    weight_ = Parameter::learnable({out_, in_ / groups_, kernel_, kernel_});
    if (has_bias_) bias_ = Parameter::learnable({out_});
}

void Conv2d::visit(const std::string& prefix, const ParameterVisitor& fn) {
    fn(prefix + "weight", weight_);
    if (has_bias_) fn(prefix + "bias", bias_);
}

void Conv2d::init(Rng& rng) {
    const double fan_out = static_cast<double>(out_) * kernel_ * kernel_ / groups_;
    const double std = std::sqrt(2.0 / fan_out);
    for (auto& w : weight_.value.values()) w = static_cast<float>(rng.normal() * std);
    if (has_bias_) bias_.value.fill(0.0f);
}

Tensor Conv2d::forward(const Tensor& x, ForwardContext&) {
    require_4d(x, in_, "Conv2d");
    input_ = x;
    return groups_ == 1 ? forward_dense(x) : forward_depthwise(x);
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    return groups_ == 1 ? backward_dense(grad_out) : backward_depthwise(grad_out);
}

namespace {

void im2col(const float* x, int channels, int h, int w, int k, int stride, int pad, int oh, int ow, float* cols) {
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < channels; ++c) {
        const float* xc = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    float* dst = row + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, 0.0f);
                        continue;
                    }
                    const float* src = xc + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im(const float* cols, int channels, int h, int w, int k, int stride, int pad, int oh, int ow, float* x) {
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < channels; ++c) {
        float* xc = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const float* src = row + static_cast<std::size_t>(oy) * ow;
                    float* dst = xc + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor Conv2d::forward_dense(const Tensor& x) {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = out_size(h), ow = out_size(w);
    if (oh <= 0 || ow <= 0) throw Error(ErrorCode::ShapeMismatch, "Conv2d input smaller than kernel");
    Tensor y({n, out_, oh, ow});
    const int kdim = in_ * kernel_ * kernel_;
    const int plane = oh * ow;
    const bool pointwise = kernel_ == 1 && stride_ == 1 && padding_ == 0;
    std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(kdim) * plane);
    ConstMatMap wmat(weight_.value.data(), out_, kdim);

    for (int b = 0; b < n; ++b) {
        const float* xb = x.data() + static_cast<std::size_t>(b) * in_ * h * w;
        const float* colptr = xb;
        if (!pointwise) {
            im2col(xb, in_, h, w, kernel_, stride_, padding_, oh, ow, cols.data());
            colptr = cols.data();
        }
        MatMap ymat(y.data() + static_cast<std::size_t>(b) * out_ * plane, out_, plane);
        ymat.noalias() = wmat * ConstMatMap(colptr, kdim, plane);
        if (has_bias_)
            for (int o = 0; o < out_; ++o) ymat.row(o).array() += bias_.value[o];
    }
    return y;
}

Tensor Conv2d::backward_dense(const Tensor& g) {
    const Tensor& x = input_;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = out_size(h), ow = out_size(w);
    check_shape(g, {n, out_, oh, ow}, "Conv2d backward");
    const int kdim = in_ * kernel_ * kernel_;
    const int plane = oh * ow;
    const bool pointwise = kernel_ == 1 && stride_ == 1 && padding_ == 0;
    std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(kdim) * plane);
    std::vector<float> dcols(static_cast<std::size_t>(kdim) * plane);
    Tensor dx(x.shape());
    ConstMatMap wmat(weight_.value.data(), out_, kdim);
    MatMap dw(weight_.grad.data(), out_, kdim);

    for (int b = 0; b < n; ++b) {
        const float* xb = x.data() + static_cast<std::size_t>(b) * in_ * h * w;
        const float* colptr = xb;
        if (!pointwise) {
            im2col(xb, in_, h, w, kernel_, stride_, padding_, oh, ow, cols.data());
            colptr = cols.data();
        }
        ConstMatMap gmat(g.data() + static_cast<std::size_t>(b) * out_ * plane, out_, plane);
        dw.noalias() += gmat * ConstMatMap(colptr, kdim, plane).transpose();
        if (has_bias_)
            for (int o = 0; o < out_; ++o) bias_.grad[o] += gmat.row(o).sum();
        float* dxb = dx.data() + static_cast<std::size_t>(b) * in_ * h * w;
        if (pointwise) {
            MatMap(dxb, kdim, plane).noalias() = wmat.transpose() * gmat;
        } else {
            MatMap(dcols.data(), kdim, plane).noalias() = wmat.transpose() * gmat;
            col2im(dcols.data(), in_, h, w, kernel_, stride_, padding_, oh, ow, dxb);
        }
    }
    return dx;
}

Tensor Conv2d::forward_depthwise(const Tensor& x) {
    const int n = x.dim(0), c = in_, h = x.dim(2), w = x.dim(3);
    const int oh = out_size(h), ow = out_size(w);
    const int k = kernel_;
    Tensor y({n, c, oh, ow});
    for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const float* xc = x.data() + (static_cast<std::size_t>(b) * c + ch) * h * w;
            const float* wk = weight_.value.data() + static_cast<std::size_t>(ch) * k * k;
            float* yc = y.data() + (static_cast<std::size_t>(b) * c + ch) * oh * ow;
            const float bias = has_bias_ ? bias_.value[ch] : 0.0f;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    float acc = bias;
                    const int iy0 = oy * stride_ - padding_;
                    const int ix0 = ox * stride_ - padding_;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        const float* xr = xc + static_cast<std::size_t>(iy) * w;
                        const float* wr = wk + ky * k;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix >= 0 && ix < w) acc += xr[ix] * wr[kx];
                        }
                    }
                    yc[static_cast<std::size_t>(oy) * ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

Tensor Conv2d::backward_depthwise(const Tensor& g) {
    const Tensor& x = input_;
    const int n = x.dim(0), c = in_, h = x.dim(2), w = x.dim(3);
    const int oh = out_size(h), ow = out_size(w);
    const int k = kernel_;
    check_shape(g, {n, c, oh, ow}, "Conv2d backward");
    Tensor dx(x.shape());
    for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t in_off = (static_cast<std::size_t>(b) * c + ch) * h * w;
            const float* xc = x.data() + in_off;
            float* dxc = dx.data() + in_off;
            const float* wk = weight_.value.data() + static_cast<std::size_t>(ch) * k * k;
            float* dwk = weight_.grad.data() + static_cast<std::size_t>(ch) * k * k;
            const float* gc = g.data() + (static_cast<std::size_t>(b) * c + ch) * oh * ow;
            float bias_acc = 0.0f;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const float gv = gc[static_cast<std::size_t>(oy) * ow + ox];
                    bias_acc += gv;
                    if (gv == 0.0f) continue;
                    const int iy0 = oy * stride_ - padding_;
                    const int ix0 = ox * stride_ - padding_;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        const std::size_t row = static_cast<std::size_t>(iy) * w;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= w) continue;
                            dwk[ky * k + kx] += gv * xc[row + ix];
                            dxc[row + ix] += gv * wk[ky * k + kx];
                        }
                    }
                }
            }
            if (has_bias_) bias_.grad[ch] += bias_acc;
        }
    }
    return dx;
}

// --- BatchNorm2d ---------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels, float eps, float momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
    weight_ = Parameter::learnable({channels});
    bias_ = Parameter::learnable({channels});
    running_mean_ = Parameter::state({channels}, 0.0f);
    running_var_ = Parameter::state({channels}, 1.0f);
    weight_.value.fill(1.0f);
}

void BatchNorm2d::visit(const std::string& prefix, const ParameterVisitor& fn) {
    fn(prefix + "weight", weight_);
    fn(prefix + "bias", bias_);
    fn(prefix + "running_mean", running_mean_);
    fn(prefix + "running_var", running_var_);
}

void BatchNorm2d::init(Rng&) {
    weight_.value.fill(1.0f);
    bias_.value.fill(0.0f);
    running_mean_.value.fill(0.0f);
    running_var_.value.fill(1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x, ForwardContext& ctx) {
    require_4d(x, channels_, "BatchNorm2d");
    const int n = x.dim(0), hw = x.dim(2) * x.dim(3);
    const std::size_t m = static_cast<std::size_t>(n) * hw;
    xhat_ = Tensor(x.shape());
    inv_std_.assign(channels_, 0.0f);
    Tensor y(x.shape());
    trained_pass_ = ctx.training;

    for (int c = 0; c < channels_; ++c) {
        float mean, var;
        if (ctx.training) {
            double sum = 0.0, sq = 0.0;
            for (int b = 0; b < n; ++b) {
                const float* p = x.data() + (static_cast<std::size_t>(b) * channels_ + c) * hw;
                for (int i = 0; i < hw; ++i) sum += p[i];
            }
            const double mu = sum / static_cast<double>(m);
            for (int b = 0; b < n; ++b) {
                const float* p = x.data() + (static_cast<std::size_t>(b) * channels_ + c) * hw;
                for (int i = 0; i < hw; ++i) sq += (p[i] - mu) * (p[i] - mu);
            }
            const double biased = sq / static_cast<double>(m);
            const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : biased;
            mean = static_cast<float>(mu);
            var = static_cast<float>(biased);
            running_mean_.value[c] = (1 - momentum_) * running_mean_.value[c] + momentum_ * mean;
            running_var_.value[c] =
                (1 - momentum_) * running_var_.value[c] + momentum_ * static_cast<float>(unbiased);
        } else {
            mean = running_mean_.value[c];
            var = running_var_.value[c];
        }
        const float inv_std = 1.0f / std::sqrt(var + eps_);
        inv_std_[c] = inv_std;
        const float gamma = weight_.value[c], beta = bias_.value[c];
        for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * hw;
            for (int i = 0; i < hw; ++i) {
                const float xh = (x[off + i] - mean) * inv_std;
                xhat_[off + i] = xh;
                y[off + i] = gamma * xh + beta;
            }
        }
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& g) {
    check_shape(g, xhat_.shape(), "BatchNorm2d backward");
    const int n = g.dim(0), hw = g.dim(2) * g.dim(3);
    const auto m = static_cast<float>(static_cast<std::size_t>(n) * hw);
    Tensor dx(g.shape());
    for (int c = 0; c < channels_; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * hw;
            for (int i = 0; i < hw; ++i) {
                sum_g += g[off + i];
                sum_gx += g[off + i] * xhat_[off + i];
            }
        }
        weight_.grad[c] += static_cast<float>(sum_gx);
        bias_.grad[c] += static_cast<float>(sum_g);
        const float gamma = weight_.value[c];
        const float k = gamma * inv_std_[c];
        const auto mean_g = static_cast<float>(sum_g / m);
        const auto mean_gx = static_cast<float>(sum_gx / m);
        for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * hw;
            for (int i = 0; i < hw; ++i) {
                dx[off + i] = trained_pass_ ? k * (g[off + i] - mean_g - xhat_[off + i] * mean_gx) : k * g[off + i];
            }
        }
    }
    return dx;
}

// --- activations ---------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, ForwardContext&) {
    output_ = x;
    for (auto& v : output_.values()) v = v > 0.0f ? v : 0.0f;
    return output_;
}

Tensor ReLU::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (output_[i] <= 0.0f) dx[i] = 0.0f;
    return dx;
}

namespace {
inline float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }
}  // namespace

Tensor SiLU::forward(const Tensor& x, ForwardContext&) {
    input_ = x;
    Tensor y = x;
    for (auto& v : y.values()) v = v * sigmoid(v);
    return y;
}

Tensor SiLU::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const float s = sigmoid(input_[i]);
        dx[i] *= s * (1.0f + input_[i] * (1.0f - s));
    }
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x, ForwardContext&) {
    output_ = x;
    for (auto& v : output_.values()) v = sigmoid(v);
    return output_;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= output_[i] * (1.0f - output_[i]);
    return dx;
}

// --- pooling -------------------------------------------------------------------------

Tensor MaxPool2d::forward(const Tensor& x, ForwardContext&) {
    if (x.ndim() != 4) throw Error(ErrorCode::ShapeMismatch, "MaxPool2d expects NCHW input");
    input_shape_ = x.shape();
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = (h + 2 * padding_ - kernel_) / stride_ + 1;
    const int ow = (w + 2 * padding_ - kernel_) / stride_ + 1;
    Tensor y({n, c, oh, ow});
    argmax_.assign(y.size(), 0);
    std::size_t o = 0;
    for (int p = 0; p < n * c; ++p) {
        const std::size_t base = static_cast<std::size_t>(p) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox, ++o) {
                float best = -std::numeric_limits<float>::infinity();
                std::size_t best_i = base;
                for (int ky = 0; ky < kernel_; ++ky) {
                    const int iy = oy * stride_ - padding_ + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kernel_; ++kx) {
                        const int ix = ox * stride_ - padding_ + kx;
                        if (ix < 0 || ix >= w) continue;
                        const std::size_t i = base + static_cast<std::size_t>(iy) * w + ix;
                        if (x[i] > best) {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                y[o] = best;
                argmax_[o] = best_i;
            }
        }
    }
    return y;
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
    Tensor dx(input_shape_);
    for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
    return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, ForwardContext&) {
    if (x.ndim() != 4) throw Error(ErrorCode::ShapeMismatch, "GlobalAvgPool expects NCHW input");
    input_shape_ = x.shape();
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor y(keep_spatial_ ? std::vector<int>{n, c, 1, 1} : std::vector<int>{n, c});
    for (int p = 0; p < n * c; ++p) {
        const float* src = x.data() + static_cast<std::size_t>(p) * hw;
        double acc = 0.0;
        for (int i = 0; i < hw; ++i) acc += src[i];
        y[p] = static_cast<float>(acc / hw);
    }
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
    Tensor dx(input_shape_);
    const int nc = input_shape_[0] * input_shape_[1];
    const int hw = input_shape_[2] * input_shape_[3];
    for (int p = 0; p < nc; ++p) {
        const float v = grad_out[p] / static_cast<float>(hw);
        std::fill(dx.data() + static_cast<std::size_t>(p) * hw, dx.data() + static_cast<std::size_t>(p + 1) * hw, v);
    }
    return dx;
}

// --- Linear --------------------------------------------------------------------------

Linear::Linear(int in_features, int out_features) : in_(in_features), out_(out_features) {
    weight_ = Parameter::learnable({out_, in_});
    bias_ = Parameter::learnable({out_});
}

void Linear::visit(const std::string& prefix, const ParameterVisitor& fn) {
    fn(prefix + "weight", weight_);
    fn(prefix + "bias", bias_);
}

void Linear::init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    for (auto& w : weight_.value.values()) w = static_cast<float>(rng.uniform(-bound, bound));
    for (auto& b : bias_.value.values()) b = static_cast<float>(rng.uniform(-bound, bound));
}

Tensor Linear::forward(const Tensor& x, ForwardContext&) {
    if (x.ndim() != 2 || x.dim(1) != in_)
        throw Error(ErrorCode::ShapeMismatch,
                    "Linear: expected N x " + std::to_string(in_) + " input, got " + shape_string(x.shape()));
    input_ = x;
    const int n = x.dim(0);
    Tensor y({n, out_});
    MatMap ym(y.data(), n, out_);
    ym.noalias() = ConstMatMap(x.data(), n, in_) * ConstMatMap(weight_.value.data(), out_, in_).transpose();
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_; ++o) ym(i, o) += bias_.value[o];
    return y;
}

Tensor Linear::backward(const Tensor& g) {
    const int n = input_.dim(0);
    check_shape(g, {n, out_}, "Linear backward");
    ConstMatMap gm(g.data(), n, out_);
    MatMap(weight_.grad.data(), out_, in_).noalias() += gm.transpose() * ConstMatMap(input_.data(), n, in_);
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_; ++o) bias_.grad[o] += gm(i, o);
    Tensor dx({n, in_});
    MatMap(dx.data(), n, in_).noalias() = gm * ConstMatMap(weight_.value.data(), out_, in_);
    return dx;
}

// --- regularizers --------------------------------------------------------------------

Tensor Dropout::forward(const Tensor& x, ForwardContext& ctx) {
    if (!ctx.training || p_ <= 0.0f) {
        mask_.clear();
        return x;
    }
    require_training_rng(ctx, "Dropout");
    mask_.resize(x.size());
    const float keep_scale = p_ < 1.0f ? 1.0f / (1.0f - p_) : 0.0f;
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
        mask_[i] = ctx.rng->bernoulli(p_) ? 0.0f : keep_scale;
        y[i] *= mask_[i];
    }
    return y;
}

Tensor Dropout::backward(const Tensor& grad_out) {
    if (mask_.empty()) return grad_out;
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
    return dx;
}

Tensor StochasticDepth::forward(const Tensor& x, ForwardContext& ctx) {
    if (!ctx.training || p_ <= 0.0f) {
        scale_.clear();
        return x;
    }
    require_training_rng(ctx, "StochasticDepth");
    const int n = x.dim(0);
    const std::size_t per = x.size() / static_cast<std::size_t>(n);
    const float survival = 1.0f - p_;
    scale_.resize(n);
    Tensor y = x;
    for (int b = 0; b < n; ++b) {
        const bool keep = ctx.rng->bernoulli(survival);
        scale_[b] = keep && survival > 0.0f ? 1.0f / survival : 0.0f;
        for (std::size_t i = 0; i < per; ++i) y[b * per + i] *= scale_[b];
    }
    return y;
}

Tensor StochasticDepth::backward(const Tensor& grad_out) {
    if (scale_.empty()) return grad_out;
    Tensor dx = grad_out;
    const std::size_t per = dx.size() / scale_.size();
    for (std::size_t b = 0; b < scale_.size(); ++b)
        for (std::size_t i = 0; i < per; ++i) dx[b * per + i] *= scale_[b];
    return dx;
}

}  // namespace leukopipe::nn
