#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "fixtures.hpp"
#include "leukopipe/error.hpp"
#include "leukopipe/nn/blocks.hpp"
#include "leukopipe/nn/optim.hpp"
#include "leukopipe/nn/weights_io.hpp"

using namespace leukopipe;
using namespace leukopipe::nn;
using fixture::TempDir;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double scale = 1.0) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (auto& v : t.values()) v = static_cast<float>(scale * rng.normal());
    return t;
}

double weighted_sum(const Tensor& y, const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * w[i];
    return s;
}

double rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        norm += numeric[i] * numeric[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

// Compares backward() against central differences of L = sum(w * forward(x))
// on a sample of input and parameter coordinates.
void check_gradients(Module& m, const Tensor& x_in, bool training, double tol = 2e-2, float eps = 1e-2f) {
    ForwardContext ctx{training, nullptr};
    Tensor x = x_in;
    const Tensor y0 = m.forward(x, ctx);
    const Tensor w = random_tensor(y0.shape(), 99);
    for (auto& [name, p] : named_parameters(m))
        if (!p->buffer) p->grad.fill(0.0f);
    const Tensor dx = m.backward(w);

    auto loss = [&] {
        ForwardContext c{training, nullptr};
        return weighted_sum(m.forward(x, c), w);
    };
    // Coordinates whose one-sided differences disagree sit on a ReLU kink;
    // they are skipped, but only a few may be.
    auto probe = [&](float* slot, std::size_t n, const float* grad, const std::string& what) {
        Rng pick(n);
        std::vector<double> analytic, numeric;
        const double base = loss();
        int kinks = 0;
        for (int k = 0; k < 24; ++k) {
            const auto i = static_cast<std::size_t>(pick.randint(0, static_cast<std::int64_t>(n)));
            const float keep = slot[i];
            slot[i] = keep + eps;
            const double up = loss();
            slot[i] = keep - eps;
            const double down = loss();
            slot[i] = keep;
            const double fwd = (up - base) / eps, bwd = (base - down) / eps;
            if (std::abs(fwd - bwd) > 0.1 * std::max(std::abs(fwd), std::abs(bwd)) + 1e-2) {
                ++kinks;
                continue;
            }
            numeric.push_back((up - down) / (2.0 * eps));
            analytic.push_back(grad[i]);
        }
        EXPECT_LE(kinks, 6) << what;
        EXPECT_LT(rel_error(analytic, numeric), tol) << what;
    };
    probe(x.data(), x.size(), dx.data(), "input");
    for (auto& [name, p] : named_parameters(m))
        if (!p->buffer) probe(p->value.data(), p->value.size(), p->grad.data(), name);
}

template <class M>
M& initialized(M& m, std::uint64_t seed = 1) {
    Rng rng(seed);
    m.init(rng);
    return m;
}

}  // namespace

TEST(Tensor, ShapeAndReshape) {
    Tensor t({2, 3, 4}, 1.5f);
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.dim(1), 3);
    EXPECT_EQ(t.reshaped({6, 4}).shape(), (std::vector<int>{6, 4}));
    EXPECT_THROW(t.reshaped({5, 5}), Error);
    EXPECT_THROW(check_shape(t, {2, 3, 5}, "t"), Error);
}

TEST(Conv2d, MatchesDirectConvolution) {
    Conv2d conv(2, 3, 3, 2, 1, 1, true);
    initialized(conv);
    for (auto& v : conv.bias()->value.values()) v = 0.25f;
    const auto x = random_tensor({1, 2, 7, 6}, 2);
    ForwardContext ctx;
    const auto y = conv.forward(x, ctx);
    ASSERT_EQ(y.shape(), (std::vector<int>{1, 3, 4, 3}));
    const auto& w = conv.weight().value;
    for (int o = 0; o < 3; ++o)
        for (int oy = 0; oy < 4; ++oy)
            for (int ox = 0; ox < 3; ++ox) {
                double acc = 0.25;
                for (int i = 0; i < 2; ++i)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                            if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
                            acc += w[((o * 2 + i) * 3 + ky) * 3 + kx] * x[(i * 7 + iy) * 6 + ix];
                        }
                EXPECT_NEAR(y[(o * 4 + oy) * 3 + ox], acc, 1e-5);
            }
}

TEST(Conv2d, DepthwiseMatchesGroupedDefinition) {
    Conv2d conv(3, 3, 3, 1, 1, 3);
    initialized(conv);
    const auto x = random_tensor({2, 3, 5, 5}, 3);
    ForwardContext ctx;
    const auto y = conv.forward(x, ctx);
    const auto& w = conv.weight().value;
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
            for (int oy = 0; oy < 5; ++oy)
                for (int ox = 0; ox < 5; ++ox) {
                    double acc = 0.0;
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = oy - 1 + ky, ix = ox - 1 + kx;
                            if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
                            acc += w[(c * 3 + ky) * 3 + kx] * x[((n * 3 + c) * 5 + iy) * 5 + ix];
                        }
                    EXPECT_NEAR(y[((n * 3 + c) * 5 + oy) * 5 + ox], acc, 1e-5);
                }
}

TEST(Gradients, Conv2dDense) {
    Conv2d conv(3, 4, 3, 2, 1, 1, true);
    check_gradients(initialized(conv), random_tensor({2, 3, 6, 5}, 4), true);
}

TEST(Gradients, Conv2dDepthwise) {
    Conv2d conv(4, 4, 5, 2, 2, 4);
    check_gradients(initialized(conv), random_tensor({2, 4, 7, 7}, 5), true);
}

TEST(Gradients, Conv2dPointwise) {
    Conv2d conv(5, 3, 1);
    check_gradients(initialized(conv), random_tensor({3, 5, 4, 4}, 6), true);
}

TEST(Gradients, BatchNormTraining) {
    BatchNorm2d bn(3);
    initialized(bn);
    check_gradients(bn, random_tensor({4, 3, 3, 3}, 7, 2.0), true, 2e-2, 5e-3f);
}

TEST(Gradients, BatchNormEval) {
    BatchNorm2d bn(3);
    check_gradients(initialized(bn), random_tensor({2, 3, 4, 4}, 8), false);
}

TEST(Gradients, Activations) {
    SiLU silu;
    check_gradients(silu, random_tensor({2, 3, 4, 4}, 9), true);
    Sigmoid sig;
    check_gradients(sig, random_tensor({2, 3, 4, 4}, 10), true);
    ReLU relu;
    check_gradients(relu, random_tensor({2, 3, 4, 4}, 11), true, 2e-2, 1e-3f);
}

TEST(Gradients, Pooling) {
    MaxPool2d pool(3, 2, 1);
    check_gradients(pool, random_tensor({2, 2, 7, 7}, 12), true, 2e-2, 1e-3f);
    GlobalAvgPool gap;
    check_gradients(gap, random_tensor({2, 3, 5, 5}, 13), true);
}

TEST(Gradients, Linear) {
    Linear fc(6, 2);
    check_gradients(initialized(fc), random_tensor({5, 6}, 14), true);
}

TEST(Gradients, SqueezeExcitation) {
    SqueezeExcitation se(8, 2);
    check_gradients(initialized(se), random_tensor({2, 8, 3, 3}, 15), true);
}

TEST(Gradients, MBConvResidual) {
    MBConv block(8, 8, 4, 3, 1, 0.0f);
    check_gradients(initialized(block), random_tensor({3, 8, 5, 5}, 16), true, 3e-2, 5e-3f);
}

TEST(Gradients, MBConvStrided) {
    MBConv block(4, 6, 1, 5, 2, 0.0f);
    check_gradients(initialized(block), random_tensor({3, 4, 6, 6}, 17), true, 3e-2, 5e-3f);
}

TEST(Gradients, Bottleneck) {
    Bottleneck block(8, 4, 2);
    check_gradients(initialized(block), random_tensor({3, 8, 6, 6}, 26), true, 3e-2, 1e-3f);
}

TEST(Gradients, BottleneckEval) {
    Bottleneck block(8, 4, 2);
    check_gradients(initialized(block), random_tensor({3, 8, 6, 6}, 18), false, 3e-2, 1e-3f);
}

TEST(Gradients, TinyCnnEval) {
    auto net = make_tiny_cnn_features();
    Rng rng(3);
    net->init(rng);
    check_gradients(*net, random_tensor({4, 3, 16, 16}, 19), false, 3e-2, 1e-3f);
}

TEST(Gradients, TinyCnn) {
    auto net = make_tiny_cnn_features();
    Rng rng(3);
    net->init(rng);
    check_gradients(*net, random_tensor({4, 3, 16, 16}, 19), true, 3e-2, 1e-3f);
}

TEST(Dropout, IdentityInEvalAndScaledInTraining) {
    Dropout drop(0.5f);
    const auto x = random_tensor({4, 100}, 20);
    ForwardContext eval;
    EXPECT_EQ(drop.forward(x, eval), x);
    Rng rng(1);
    ForwardContext train{true, &rng};
    const auto y = drop.forward(x, train);
    int zeros = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0f) {
            ++zeros;
        } else {
            EXPECT_FLOAT_EQ(y[i], 2.0f * x[i]);
        }
    }
    EXPECT_GT(zeros, 120);
    EXPECT_LT(zeros, 280);
}

TEST(BatchNorm, RunningStatisticsFollowMomentum) {
    BatchNorm2d bn(1);
    initialized(bn);
    Tensor x({2, 1, 1, 2}, std::vector<float>{1, 2, 3, 4});
    Rng rng(1);
    ForwardContext train{true, &rng};
    bn.forward(x, train);
    std::map<std::string, Tensor> s;
    for (auto& [name, t] : state_dict(bn)) s[name] = t;
    EXPECT_NEAR(s["running_mean"][0], 0.1 * 2.5, 1e-6);
    // Unbiased variance of {1,2,3,4} is 5/3.
    EXPECT_NEAR(s["running_var"][0], 0.9 + 0.1 * 5.0 / 3.0, 1e-6);
}

TEST(Naming, TorchvisionLayouts) {
    Bottleneck b(64, 64, 1);
    std::vector<std::string> names;
    for (auto& [name, p] : named_parameters(b)) names.push_back(name);
    const std::vector<std::string> want{
        "conv1.weight", "bn1.weight", "bn1.bias", "bn1.running_mean", "bn1.running_var",
        "conv2.weight", "bn2.weight", "bn2.bias", "bn2.running_mean", "bn2.running_var",
        "conv3.weight", "bn3.weight", "bn3.bias", "bn3.running_mean", "bn3.running_var",
        "downsample.0.weight", "downsample.1.weight", "downsample.1.bias", "downsample.1.running_mean",
        "downsample.1.running_var"};
    EXPECT_EQ(names, want);

    MBConv mb(16, 24, 6, 3, 2, 0.0f);
    std::set<std::string> mb_names;
    for (auto& [name, p] : named_parameters(mb)) mb_names.insert(name);
    for (const char* n : {"block.0.0.weight", "block.1.0.weight", "block.2.fc1.weight", "block.2.fc2.bias",
                          "block.3.0.weight", "block.3.1.running_var"})
        EXPECT_TRUE(mb_names.count(n)) << n;
}

TEST(MakeDivisible, EfficientNetWidths) {
    EXPECT_EQ(make_divisible(32 * 1.0), 32);
    EXPECT_EQ(make_divisible(32 * 1.2), 40);
    EXPECT_EQ(make_divisible(1280 * 1.2), 1536);
    EXPECT_EQ(make_divisible(16 * 1.2), 24);
}

TEST(Adam, MatchesReferenceUpdate) {
    auto p = Parameter::learnable({3});
    p.value = Tensor({3}, std::vector<float>{1.0f, -2.0f, 0.5f});
    Adam opt({&p}, {0.01, 0.9, 0.999, 1e-8});
    std::vector<double> w{1.0, -2.0, 0.5}, m(3, 0.0), v(3, 0.0);
    for (int t = 1; t <= 5; ++t) {
        opt.zero_grad();
        for (int i = 0; i < 3; ++i) p.grad[i] = static_cast<float>(2.0 * w[i] + 0.1 * t);
        opt.step();
        for (int i = 0; i < 3; ++i) {
            const double g = 2.0 * w[i] + 0.1 * t;
            m[i] = 0.9 * m[i] + 0.1 * g;
            v[i] = 0.999 * v[i] + 0.001 * g * g;
            const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
            w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
            EXPECT_NEAR(p.value[i], w[i], 1e-5) << "t=" << t;
        }
    }
    EXPECT_EQ(opt.steps(), 5);
}

TEST(Adam, SkipsBuffers) {
    auto b = Parameter::state({2}, 3.0f);
    auto p = Parameter::learnable({2});
    p.grad.fill(1.0f);
    Adam opt({&b, &p}, {});
    opt.step();
    EXPECT_EQ(b.value[0], 3.0f);
    EXPECT_LT(p.value[0], 0.0f);
}

TEST(WeightsIo, RoundTrip) {
    TempDir dir;
    NamedTensors t{{"a.weight", random_tensor({2, 3, 1, 1}, 1)}, {"b", random_tensor({4}, 2)}, {"scalar", Tensor({1}, 7.0f)}};
    write_tensors(dir / "x.lkpw", t);
    EXPECT_EQ(read_tensors(dir / "x.lkpw"), t);
}

TEST(WeightsIo, CorruptFilesRejected) {
    TempDir dir;
    { std::ofstream(dir / "bad.lkpw") << "NOPE"; }
    EXPECT_THROW(read_tensors(dir / "bad.lkpw"), Error);
    write_tensors(dir / "ok.lkpw", {{"w", random_tensor({100}, 3)}});
    std::filesystem::resize_file(dir / "ok.lkpw", 50);
    EXPECT_THROW(read_tensors(dir / "ok.lkpw"), Error);
}

TEST(WeightsIo, LoadStateDictReportsMissingAndUnexpected) {
    Linear a(3, 2), b(3, 2);
    initialized(a, 1);
    initialized(b, 2);
    auto sd = state_dict(a);
    sd.push_back({"extra", Tensor({1})});
    const auto r = load_state_dict(b, sd);
    EXPECT_EQ(r.loaded.size(), 2u);
    EXPECT_EQ(r.unexpected, std::vector<std::string>{"extra"});
    EXPECT_EQ(state_dict(b)[0].second, state_dict(a)[0].second);

    Linear c(3, 2);
    const auto partial = load_state_dict(c, {{"weight", sd[0].second}});
    EXPECT_EQ(partial.missing, std::vector<std::string>{"bias"});

    const auto skipped = load_state_dict(c, sd, {"bias"});
    EXPECT_TRUE(skipped.missing.empty());
    EXPECT_EQ(skipped.loaded, std::vector<std::string>{"weight"});

    Linear wrong(4, 2);
    try {
        load_state_dict(wrong, sd);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
}
