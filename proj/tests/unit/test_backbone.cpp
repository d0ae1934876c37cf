#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "leukopipe/backbone.hpp"
#include "leukopipe/error.hpp"
#include "leukopipe/hashing.hpp"

using namespace leukopipe;
using fixture::TempDir;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no leukopipe::Error thrown";
    return ErrorCode::IoFailure;
}

nn::Tensor random_batch(int n, int side, std::uint64_t seed) {
    std::vector<Image> imgs;
    for (int i = 0; i < n; ++i) imgs.push_back(fixture::random_image(side, side, seed + i));
    return to_batch(imgs);
}

std::size_t count_values(nn::Module& m, bool buffers) {
    std::size_t n = 0;
    for (auto& [name, p] : nn::named_parameters(m))
        if (p->buffer == buffers) n += p->value.size();
    return n;
}

// Writes `<arch>.lkpw` and its checksum from a randomly initialized model.
std::unique_ptr<Classifier> publish_weights(const std::filesystem::path& dir, Arch arch, std::uint64_t seed) {
    auto src = build_model(ModelSpec::make(arch, false, seed));
    std::filesystem::create_directories(dir);
    const auto path = pretrained_weights_path(dir, arch);
    nn::write_tensors(path, nn::state_dict(*src));
    std::ofstream(path.string() + ".sha256") << sha256_file(path) << "  " << path.filename().string() << "\n";
    return src;
}

}  // namespace

TEST(Arch, ParseAndName) {
    EXPECT_EQ(parse_arch("effnet_b3"), Arch::EFFNET_B3);
    EXPECT_EQ(parse_arch("EFFNET_B3"), Arch::EFFNET_B3);
    EXPECT_EQ(parse_arch("efficientnet_b0"), Arch::EFFNET_B0);
    EXPECT_EQ(parse_arch("resnet101"), Arch::RESNET101);
    EXPECT_EQ(parse_arch("tiny_cnn"), Arch::TINY_CNN);
    for (Arch a : {Arch::RESNET50, Arch::RESNET101, Arch::EFFNET_B0, Arch::EFFNET_B1, Arch::EFFNET_B3, Arch::TINY_CNN})
        EXPECT_EQ(parse_arch(to_string(a)), a);
    EXPECT_EQ(code_of([] { parse_arch("vgg16"); }), ErrorCode::UnknownArch);
}

TEST(Arch, PenultimateWidths) {
    EXPECT_EQ(feature_dim(Arch::RESNET50), 2048);
    EXPECT_EQ(feature_dim(Arch::RESNET101), 2048);
    EXPECT_EQ(feature_dim(Arch::EFFNET_B0), 1280);
    EXPECT_EQ(feature_dim(Arch::EFFNET_B1), 1280);
    EXPECT_EQ(feature_dim(Arch::EFFNET_B3), 1536);
}

TEST(ModelSpec, ValidateRejectsInconsistentFields) {
    auto spec = ModelSpec::make(Arch::EFFNET_B3, true, 1);
    EXPECT_EQ(spec.feature_dim, 1536);
    EXPECT_EQ(spec.num_classes, 2);
    spec.validate();
    spec.feature_dim = 1280;
    EXPECT_EQ(code_of([&] { spec.validate(); }), ErrorCode::InvalidConfig);
    spec = ModelSpec::make(Arch::EFFNET_B3, true, 1);
    spec.num_classes = 3;
    EXPECT_EQ(code_of([&] { spec.validate(); }), ErrorCode::InvalidConfig);
}

// Torchvision parameter counts with the 1000-way head swapped for a 2-way one.
TEST(Registry, ParameterCountsMatchTorchvision) {
    const std::vector<std::tuple<Arch, std::size_t, std::size_t>> expected{
        {Arch::RESNET50, 23512130, 53120},  {Arch::RESNET101, 42504258, 105344}, {Arch::EFFNET_B0, 4010110, 42016},
        {Arch::EFFNET_B1, 6515746, 62048}, {Arch::EFFNET_B3, 10699306, 87296}};
    for (const auto& [arch, params, buffers] : expected) {
        auto model = build_model(ModelSpec::make(arch, false, 1));
        EXPECT_EQ(count_values(*model, false), params) << to_string(arch);
        EXPECT_EQ(count_values(*model, true), buffers) << to_string(arch);
    }
}

TEST(Registry, TorchvisionParameterNames) {
    auto resnet = build_model(ModelSpec::make(Arch::RESNET50, false, 1));
    std::set<std::string> names;
    for (auto& [n, p] : nn::named_parameters(*resnet)) names.insert(n);
    for (const char* n : {"conv1.weight", "bn1.running_mean", "layer1.0.downsample.0.weight", "layer4.2.bn3.running_var",
                          "fc.weight", "fc.bias"})
        EXPECT_TRUE(names.count(n)) << n;
    EXPECT_EQ(names.size(), 161u + 2 * 53u);

    auto effnet = build_model(ModelSpec::make(Arch::EFFNET_B0, false, 1));
    names.clear();
    for (auto& [n, p] : nn::named_parameters(*effnet)) names.insert(n);
    for (const char* n : {"features.0.0.weight", "features.1.0.block.1.fc1.weight", "features.6.3.block.3.1.bias",
                          "features.8.1.running_var", "classifier.1.weight", "classifier.1.bias"})
        EXPECT_TRUE(names.count(n)) << n;
}

TEST(Model, EfficientNetB3BatchOfFourGivesFourByTwo) {
    auto model = build_model(ModelSpec::make(Arch::EFFNET_B3, false, 3));
    nn::ForwardContext ctx;
    const auto logits = model->forward(random_batch(4, 224, 1), ctx);
    EXPECT_EQ(logits.shape(), (std::vector<int>{4, 2}));
    for (float v : logits.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Model, EveryArchMapsBatchToTwoLogits) {
    for (Arch a : {Arch::RESNET50, Arch::RESNET101, Arch::EFFNET_B0, Arch::EFFNET_B1, Arch::TINY_CNN}) {
        auto model = build_model(ModelSpec::make(a, false, 3));
        const auto probs = predict_proba(*model, random_batch(2, 224, 5));
        ASSERT_EQ(probs.size(), 2u) << to_string(a);
        for (const auto& row : probs) {
            EXPECT_GE(row[0], 0.0);
            EXPECT_GE(row[1], 0.0);
            EXPECT_NEAR(row[0] + row[1], 1.0, 1e-6);
        }
    }
}

TEST(Model, HeadDeterminism) {
    auto a = build_model(ModelSpec::make(Arch::TINY_CNN, false, 11));
    auto b = build_model(ModelSpec::make(Arch::TINY_CNN, false, 11));
    auto c = build_model(ModelSpec::make(Arch::TINY_CNN, false, 12));
    EXPECT_EQ(a->head().weight().value, b->head().weight().value);
    EXPECT_EQ(a->head().bias().value, b->head().bias().value);
    EXPECT_NE(a->head().weight().value, c->head().weight().value);

    const float bound = 1.0f / std::sqrt(32.0f);
    for (float w : a->head().weight().value.values()) {
        EXPECT_LE(std::abs(w), bound);
    }
    auto before = a->head().weight().value;
    a->head().weight().value.fill(0.0f);
    a->reset_head();
    EXPECT_EQ(a->head().weight().value, before);
}

TEST(Model, FrozenBackboneTrainsHeadOnly) {
    auto spec = ModelSpec::make(Arch::TINY_CNN, false, 1);
    spec.freeze_backbone = true;
    auto model = build_model(spec);
    EXPECT_EQ(model->trainable_parameters().size(), 2u);
    Rng rng(1);
    nn::ForwardContext ctx{true, &rng};
    const auto logits = model->forward(random_batch(2, 64, 1), ctx);
    model->backward(nn::Tensor(logits.shape(), 1.0f));
    for (auto& [name, p] : nn::named_parameters(model->backbone()))
        if (!p->buffer) {
            for (float g : p->grad.values()) ASSERT_EQ(g, 0.0f) << name;
        }
    EXPECT_NE(model->head().bias().grad[0], 0.0f);
}

TEST(Softmax, ClosedForms) {
    const auto even = softmax2(0.0, 0.0);
    EXPECT_DOUBLE_EQ(even[0], 0.5);
    EXPECT_DOUBLE_EQ(even[1], 0.5);
    for (double z : {-5.0, 0.0, 3.0, 700.0})
        for (double c : {-2.0, 0.1, 4.0}) {
            const auto p = softmax2(z, z + c);
            EXPECT_NEAR(p[1], 1.0 / (1.0 + std::exp(-c)), 1e-12);
            EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
        }
    const auto extreme = softmax2(1000.0, -1000.0);
    EXPECT_EQ(extreme[0], 1.0);
    EXPECT_EQ(extreme[1], 0.0);
}

TEST(Softmax, RowsSumToOne) {
    nn::Tensor logits({50, 2});
    Rng rng(2);
    for (auto& v : logits.values()) v = static_cast<float>(rng.normal() * 20.0);
    for (const auto& row : softmax_rows(logits)) EXPECT_NEAR(row[0] + row[1], 1.0, 1e-6);
}

TEST(PredictProba, RejectsWrongResolution) {
    auto model = build_model(ModelSpec::make(Arch::TINY_CNN, false, 1));
    EXPECT_EQ(code_of([&] { predict_proba(*model, random_batch(1, 64, 1)); }), ErrorCode::ShapeMismatch);
}

TEST(ToBatch, NchwLayoutAndNormalization) {
    Image img(2, 3);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.1f * (y * 3 + x) + 0.01f * c;
    const auto t = to_batch({img});
    ASSERT_EQ(t.shape(), (std::vector<int>{1, 3, 2, 3}));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 3; ++x)
                EXPECT_NEAR(t[(c * 2 + y) * 3 + x], (img.at(y, x, c) - kImageNetMean[c]) / kImageNetStd[c], 1e-6);
}

TEST(Pretrained, LoadsBackboneAndKeepsFreshHead) {
    TempDir dir;
    auto src = publish_weights(dir / "w", Arch::EFFNET_B0, 99);
    auto spec = ModelSpec::make(Arch::EFFNET_B0, true, 5);
    auto loaded = build_model(spec, {dir / "w"});
    auto random = build_model(ModelSpec::make(Arch::EFFNET_B0, false, 5));

    const auto batch = random_batch(2, 64, 7);
    const auto f_src = src->features(batch);
    const auto f_loaded = loaded->features(batch);
    const auto f_random = random->features(batch);
    EXPECT_EQ(f_loaded, f_src);
    double diff = 0.0;
    for (std::size_t i = 0; i < f_loaded.size(); ++i) diff += std::abs(f_loaded[i] - f_random[i]);
    EXPECT_GT(diff, 1e-3);

    EXPECT_EQ(loaded->head().weight().value, random->head().weight().value);
    EXPECT_NE(loaded->head().weight().value, src->head().weight().value);
}

TEST(Pretrained, Failures) {
    TempDir dir;
    const auto spec = ModelSpec::make(Arch::EFFNET_B0, true, 1);
    EXPECT_EQ(code_of([&] { build_model(spec, {dir / "none"}); }), ErrorCode::WeightsUnavailable);
    EXPECT_EQ(code_of([&] { build_model(spec); }), ErrorCode::WeightsUnavailable);
    EXPECT_EQ(code_of([] { build_model(ModelSpec::make(Arch::TINY_CNN, true, 1)); }), ErrorCode::WeightsUnavailable);

    publish_weights(dir / "w", Arch::EFFNET_B0, 1);
    const auto path = pretrained_weights_path(dir / "w", Arch::EFFNET_B0);
    std::ofstream(path.string() + ".sha256") << std::string(64, '0') << "\n";
    EXPECT_EQ(code_of([&] { build_model(spec, {dir / "w"}); }), ErrorCode::ChecksumMismatch);

    std::filesystem::remove(path.string() + ".sha256");
    EXPECT_EQ(code_of([&] { build_model(spec, {dir / "w"}); }), ErrorCode::WeightsUnavailable);

    auto partial = nn::read_tensors(path);
    partial.erase(partial.begin());
    nn::write_tensors(path, partial);
    std::ofstream(path.string() + ".sha256") << sha256_file(path) << "\n";
    EXPECT_EQ(code_of([&] { build_model(spec, {dir / "w"}); }), ErrorCode::WeightsUnavailable);
}

TEST(Checkpoint, RoundTrip) {
    TempDir dir;
    auto model = build_model(ModelSpec::make(Arch::TINY_CNN, false, 4));
    model->head().bias().value[0] = 0.125f;
    CheckpointMeta meta;
    meta.spec = model->spec();
    meta.train_config_digest = "t-digest";
    meta.aug_config_digest = "a-digest";
    meta.epoch = 7;
    meta.best_val_macro_f1 = 0.875;
    meta.global_seed = 42;
    save_checkpoint(*model, meta, dir / "best");
    EXPECT_TRUE(std::filesystem::exists(dir / "best.lkpw"));
    EXPECT_TRUE(std::filesystem::exists(dir / "best.json"));

    const auto read = read_checkpoint_meta(dir / "best");
    EXPECT_EQ(read.spec, meta.spec);
    EXPECT_EQ(read.epoch, 7);
    EXPECT_EQ(read.best_val_macro_f1, 0.875);
    EXPECT_EQ(read.weights_sha256, sha256_file(dir / "best.lkpw"));

    auto loaded = load_checkpoint(dir / "best", std::string("t-digest"), std::string("a-digest"));
    EXPECT_EQ(nn::state_dict(*loaded.model), nn::state_dict(*model));
    EXPECT_EQ(loaded.meta.global_seed, 42u);
}

TEST(Checkpoint, TamperingDetected) {
    TempDir dir;
    auto model = build_model(ModelSpec::make(Arch::TINY_CNN, false, 4));
    CheckpointMeta meta;
    meta.spec = model->spec();
    meta.train_config_digest = "t";
    meta.aug_config_digest = "a";
    save_checkpoint(*model, meta, dir / "best");
    EXPECT_EQ(code_of([&] { load_checkpoint(dir / "best", std::string("other")); }), ErrorCode::ChecksumMismatch);
    EXPECT_EQ(code_of([&] { load_checkpoint(dir / "best", std::nullopt, std::string("other")); }),
              ErrorCode::ChecksumMismatch);

    auto tensors = nn::read_tensors(dir / "best.lkpw");
    tensors.back().second[0] += 1.0f;
    nn::write_tensors(dir / "best.lkpw", tensors);
    EXPECT_EQ(code_of([&] { load_checkpoint(dir / "best"); }), ErrorCode::ChecksumMismatch);
}
