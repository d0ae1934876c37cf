#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "leukopipe/backbone.hpp"
#include "leukopipe/nn/weights_io.hpp"

using namespace leukopipe;

namespace {

std::filesystem::path parity_dir() {
    const char* dir = std::getenv("LEUKOPIPE_PARITY_DIR");
    return dir ? std::filesystem::path(dir) : std::filesystem::path();
}

class Parity : public ::testing::TestWithParam<Arch> {};

}  // namespace

// Pooled features from torchvision and from this implementation, same weights and input.
TEST_P(Parity, PooledFeaturesMatchTorchvision) {
    const auto dir = parity_dir();
    if (dir.empty()) GTEST_SKIP() << "LEUKOPIPE_PARITY_DIR not set";
    const Arch arch = GetParam();
    const auto ref_path = dir / (to_string(arch) + ".reference.lkpw");
    ASSERT_TRUE(std::filesystem::exists(ref_path)) << ref_path;

    nn::Tensor input, expected;
    for (auto& [name, t] : nn::read_tensors(ref_path)) {
        if (name == "input") input = std::move(t);
        if (name == "features") expected = std::move(t);
    }
    ASSERT_EQ(input.shape().size(), 4u);

    auto model = build_model(ModelSpec::make(arch, true, 0), BuildOptions{dir});
    const auto got = model->features(input);
    ASSERT_EQ(got.shape(), expected.shape());

    double diff = 0.0, norm = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double d = got[i] - expected[i];
        diff += d * d;
        norm += static_cast<double>(expected[i]) * expected[i];
        worst = std::max(worst, std::abs(d) / (std::abs(expected[i]) + 1e-2));
    }
    const double rel = std::sqrt(diff / norm);
    EXPECT_LT(rel, 1e-3) << "relative L2 error";
    EXPECT_LT(worst, 1e-2) << "worst elementwise error";
}

INSTANTIATE_TEST_SUITE_P(Archs, Parity,
                         ::testing::Values(Arch::RESNET50, Arch::RESNET101, Arch::EFFNET_B0, Arch::EFFNET_B1,
                                           Arch::EFFNET_B3),
                         [](const auto& info) { return to_string(info.param); });
