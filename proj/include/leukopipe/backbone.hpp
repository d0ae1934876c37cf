#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "leukopipe/image.hpp"
#include "leukopipe/nn/layers.hpp"
#include "leukopipe/nn/weights_io.hpp"

namespace leukopipe {

/// TINY_CNN is a three-stage toy network for smoke tests; it has no
/// pretrained weights.
enum class Arch { RESNET50, RESNET101, EFFNET_B0, EFFNET_B1, EFFNET_B3, TINY_CNN };

std::string to_string(Arch arch);
/// Accepts "effnet_b3", "EFFNET_B3", "efficientnet_b3", "resnet50", ...
/// Throws UnknownArch.
Arch parse_arch(std::string_view text);
/// Penultimate feature width of the architecture.
int feature_dim(Arch arch);

struct ModelSpec {
    Arch arch = Arch::EFFNET_B3;
    bool pretrained = true;
    int feature_dim = 1536;
    int num_classes = 2;
    std::uint64_t head_init_seed = 0;
    bool freeze_backbone = false;

    static ModelSpec make(Arch arch, bool pretrained, std::uint64_t head_init_seed);
    /// Throws InvalidConfig when feature_dim or num_classes disagree with the arch.
    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

struct BuildOptions {
    /// Holds `<arch>.lkpw` plus `<arch>.lkpw.sha256`.
    std::filesystem::path weights_dir;
};

/// Backbone feature extractor, optional dropout, and a 2-logit linear head.
/// Parameter names follow the torchvision model of the same arch.
class Classifier : public nn::Module {
public:
    Classifier(ModelSpec spec, nn::ModulePtr backbone, float dropout, std::string head_name);

    /// N x 3 x 224 x 224 normalized batch -> N x 2 logits.
    nn::Tensor forward(const nn::Tensor& batch, nn::ForwardContext& ctx) override;
    /// Gradient w.r.t. logits. Stops at the head when the backbone is frozen.
    nn::Tensor backward(const nn::Tensor& grad_logits) override;
    void visit(const std::string& prefix, const nn::ParameterVisitor& fn) override;
    void init(Rng& rng) override;

    /// N x feature_dim, eval mode.
    nn::Tensor features(const nn::Tensor& batch);

    std::vector<nn::Parameter*> trainable_parameters();
    nn::Module& backbone() { return *backbone_; }
    nn::Linear& head() { return head_; }
    const std::string& head_name() const { return head_name_; }
    const ModelSpec& spec() const { return spec_; }

    /// Reinitializes the head from spec().head_init_seed.
    void reset_head();

private:
    ModelSpec spec_;
    nn::ModulePtr backbone_;
    nn::Dropout dropout_;
    nn::Linear head_;
    std::string head_name_;
};

/// Throws UnknownArch, WeightsUnavailable (no file, no checksum, or an
/// incomplete archive) and ChecksumMismatch.
std::unique_ptr<Classifier> build_model(const ModelSpec& spec, const BuildOptions& options = {});

/// Path of the pretrained archive for `arch` under `weights_dir`.
std::filesystem::path pretrained_weights_path(const std::filesystem::path& weights_dir, Arch arch);

/// Stacks images (H x W x 3 in [0,1]) into a normalized NCHW batch.
nn::Tensor to_batch(const std::vector<Image>& images, const ChannelTriple& mean = kImageNetMean,
                    const ChannelTriple& std = kImageNetStd);

/// Numerically stable two-way softmax of one logit row.
std::array<double, 2> softmax2(double logit0, double logit1);

/// Row-wise softmax of N x 2 logits.
std::vector<std::array<double, 2>> softmax_rows(const nn::Tensor& logits);

/// Eval-mode probabilities; column 1 is P(ALL). Throws ShapeMismatch
/// unless the batch is N x 3 x 224 x 224.
std::vector<std::array<double, 2>> predict_proba(Classifier& model, const nn::Tensor& batch);

struct CheckpointMeta {
    static constexpr int kSchemaVersion = 1;

    ModelSpec spec;
    std::string train_config_digest;
    std::string aug_config_digest;
    int epoch = 0;
    double best_val_macro_f1 = 0.0;
    std::uint64_t global_seed = 0;
    /// Filled in by save_checkpoint.
    std::string weights_sha256;
};

/// Writes `<base>.lkpw` and the sidecar `<base>.json`.
void save_checkpoint(Classifier& model, CheckpointMeta meta, const std::filesystem::path& base);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& base);

struct LoadedCheckpoint {
    std::unique_ptr<Classifier> model;
    CheckpointMeta meta;
};

/// Verifies the blob hash and, when given, the config digests
/// (ChecksumMismatch otherwise).
LoadedCheckpoint load_checkpoint(const std::filesystem::path& base,
                                 const std::optional<std::string>& expected_train_digest = std::nullopt,
                                 const std::optional<std::string>& expected_aug_digest = std::nullopt);

}  // namespace leukopipe
