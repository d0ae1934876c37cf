#include "leukopipe/backbone.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "leukopipe/error.hpp"
#include "leukopipe/hashing.hpp"
#include "leukopipe/nn/blocks.hpp"

namespace leukopipe {

using nlohmann::json;
using nn::Tensor;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
        os << text;
        if (!os.flush()) throw Error(ErrorCode::IoFailure, "write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot rename " + tmp.string() + ": " + ec.message());
}

struct ArchLayout {
    nn::ModulePtr backbone;
    float dropout;
    std::string head_name;
};

ArchLayout make_layout(Arch arch) {
    switch (arch) {
        case Arch::RESNET50: return {nn::make_resnet_features({3, 4, 6, 3}), 0.0f, "fc"};
        case Arch::RESNET101: return {nn::make_resnet_features({3, 4, 23, 3}), 0.0f, "fc"};
        case Arch::EFFNET_B0: return {nn::make_efficientnet_features(1.0, 1.0), 0.2f, "classifier.1"};
        case Arch::EFFNET_B1: return {nn::make_efficientnet_features(1.0, 1.1), 0.2f, "classifier.1"};
        case Arch::EFFNET_B3: return {nn::make_efficientnet_features(1.2, 1.4), 0.3f, "classifier.1"};
        case Arch::TINY_CNN: return {nn::make_tiny_cnn_features(), 0.0f, "head"};
    }
    throw Error(ErrorCode::UnknownArch, "unknown architecture");
}

json spec_to_json(const ModelSpec& s) {
    return {{"arch", to_string(s.arch)},           {"pretrained", s.pretrained},
            {"feature_dim", s.feature_dim},        {"num_classes", s.num_classes},
            {"head_init_seed", s.head_init_seed},  {"freeze_backbone", s.freeze_backbone}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec s;
    s.arch = parse_arch(j.at("arch").get<std::string>());
    s.pretrained = j.at("pretrained").get<bool>();
    s.feature_dim = j.at("feature_dim").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    s.head_init_seed = j.at("head_init_seed").get<std::uint64_t>();
    s.freeze_backbone = j.value("freeze_backbone", false);
    return s;
}

void load_pretrained(Classifier& model, const std::filesystem::path& weights_dir) {
    const auto path = pretrained_weights_path(weights_dir, model.spec().arch);
    const auto sum_path = std::filesystem::path(path.string() + ".sha256");
    if (weights_dir.empty() || !std::filesystem::exists(path))
        throw Error(ErrorCode::WeightsUnavailable, "pretrained weights not found: " + path.string());
    if (!std::filesystem::exists(sum_path))
        throw Error(ErrorCode::WeightsUnavailable, "no checksum file next to " + path.string());
    std::string expected = read_text(sum_path);
    expected = expected.substr(0, expected.find_first_of(" \t\r\n"));
    const std::string actual = sha256_file(path);
    if (lower(expected) != actual)
        throw Error(ErrorCode::ChecksumMismatch, "checksum mismatch for " + path.string(), {expected, actual});

    const auto result = nn::load_state_dict(model, nn::read_tensors(path), {model.head_name() + "."});
    if (!result.missing.empty())
        throw Error(ErrorCode::WeightsUnavailable, "pretrained archive is missing tensors: " + path.string(),
                    result.missing);
    if (!result.unexpected.empty())
        spdlog::warn("ignoring {} unexpected tensors in {}", result.unexpected.size(), path.string());
}

}  // namespace

std::string to_string(Arch arch) {
    switch (arch) {
        case Arch::RESNET50: return "resnet50";
        case Arch::RESNET101: return "resnet101";
        case Arch::EFFNET_B0: return "effnet_b0";
        case Arch::EFFNET_B1: return "effnet_b1";
        case Arch::EFFNET_B3: return "effnet_b3";
        case Arch::TINY_CNN: return "tiny_cnn";
    }
    return "unknown";
}

Arch parse_arch(std::string_view text) {
    std::string s = lower(text);
    std::replace(s.begin(), s.end(), '-', '_');
    if (s.rfind("efficientnet_", 0) == 0) s = "effnet_" + s.substr(13);
    for (Arch a : {Arch::RESNET50, Arch::RESNET101, Arch::EFFNET_B0, Arch::EFFNET_B1, Arch::EFFNET_B3, Arch::TINY_CNN})
        if (s == to_string(a)) return a;
    throw Error(ErrorCode::UnknownArch, "unknown architecture '" + std::string(text) + "'");
}

int feature_dim(Arch arch) {
    switch (arch) {
        case Arch::RESNET50:
        case Arch::RESNET101: return 2048;
        case Arch::EFFNET_B0:
        case Arch::EFFNET_B1: return 1280;
        case Arch::EFFNET_B3: return 1536;
        case Arch::TINY_CNN: return 32;
    }
    throw Error(ErrorCode::UnknownArch, "unknown architecture");
}

ModelSpec ModelSpec::make(Arch arch, bool pretrained, std::uint64_t head_init_seed) {
    ModelSpec s;
    s.arch = arch;
    s.pretrained = pretrained;
    s.feature_dim = leukopipe::feature_dim(arch);
    s.head_init_seed = head_init_seed;
    return s;
}

void ModelSpec::validate() const {
    std::vector<std::string> problems;
    if (feature_dim != leukopipe::feature_dim(arch))
        problems.push_back("feature_dim " + std::to_string(feature_dim) + " does not match " + to_string(arch));
    if (num_classes != 2) problems.push_back("num_classes must be 2");
    if (!problems.empty()) throw Error(ErrorCode::InvalidConfig, "invalid model spec", problems);
}

// --- Classifier ------------------------------------------------------------------------

Classifier::Classifier(ModelSpec spec, nn::ModulePtr backbone, float dropout, std::string head_name)
    : spec_(spec), backbone_(std::move(backbone)), dropout_(dropout), head_(spec.feature_dim, spec.num_classes),
      head_name_(std::move(head_name)) {}

Tensor Classifier::forward(const Tensor& batch, nn::ForwardContext& ctx) {
    Tensor h;
    if (spec_.freeze_backbone) {
        nn::ForwardContext eval{false, ctx.rng};
        h = backbone_->forward(batch, eval);
    } else {
        h = backbone_->forward(batch, ctx);
    }
    return head_.forward(dropout_.forward(h, ctx), ctx);
}

Tensor Classifier::backward(const Tensor& grad_logits) {
    Tensor g = dropout_.backward(head_.backward(grad_logits));
    if (spec_.freeze_backbone) return g;
    return backbone_->backward(g);
}

void Classifier::visit(const std::string& prefix, const nn::ParameterVisitor& fn) {
    backbone_->visit(prefix, fn);
    head_.visit(prefix + head_name_ + ".", fn);
}

void Classifier::init(Rng& rng) {
    backbone_->init(rng);
    reset_head();
}

void Classifier::reset_head() {
    Rng rng(derive_seed(spec_.head_init_seed, "head"));
    head_.init(rng);
}

Tensor Classifier::features(const Tensor& batch) {
    nn::ForwardContext ctx;
    return backbone_->forward(batch, ctx);
}

std::vector<nn::Parameter*> Classifier::trainable_parameters() {
    std::vector<nn::Parameter*> out;
    auto collect = [&](const std::string&, nn::Parameter& p) {
        if (!p.buffer) out.push_back(&p);
    };
    if (!spec_.freeze_backbone) backbone_->visit("", collect);
    head_.visit("", collect);
    return out;
}

std::filesystem::path pretrained_weights_path(const std::filesystem::path& weights_dir, Arch arch) {
    return weights_dir / (to_string(arch) + ".lkpw");
}

std::unique_ptr<Classifier> build_model(const ModelSpec& spec, const BuildOptions& options) {
    spec.validate();
    if (spec.pretrained && spec.arch == Arch::TINY_CNN)
        throw Error(ErrorCode::WeightsUnavailable, "tiny_cnn has no pretrained weights");
    auto layout = make_layout(spec.arch);
    auto model = std::make_unique<Classifier>(spec, std::move(layout.backbone), layout.dropout, layout.head_name);
    Rng rng(derive_seed(spec.head_init_seed, "backbone-init"));
    model->init(rng);
    if (spec.pretrained) load_pretrained(*model, options.weights_dir);
    return model;
}

// --- batches and probabilities ---------------------------------------------------------

Tensor to_batch(const std::vector<Image>& images, const ChannelTriple& mean, const ChannelTriple& std) {
    if (images.empty()) throw Error(ErrorCode::EmptyInput, "empty image batch");
    const int h = images.front().height(), w = images.front().width();
    Tensor batch({static_cast<int>(images.size()), 3, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t n = 0; n < images.size(); ++n) {
        if (images[n].height() != h || images[n].width() != w)
            throw Error(ErrorCode::ShapeMismatch, "images in a batch must share one size");
        const Image norm = normalize(images[n], mean, std);
        const auto px = norm.pixels();
        float* out = batch.data() + n * 3 * plane;
        for (std::size_t i = 0; i < plane; ++i)
            for (int c = 0; c < 3; ++c) out[c * plane + i] = px[i * 3 + c];
    }
    return batch;
}

std::array<double, 2> softmax2(double logit0, double logit1) {
    const double p1 = 1.0 / (1.0 + std::exp(logit0 - logit1));
    return {1.0 - p1, p1};
}

std::vector<std::array<double, 2>> softmax_rows(const Tensor& logits) {
    if (logits.ndim() != 2 || logits.dim(1) != 2)
        throw Error(ErrorCode::ShapeMismatch, "expected N x 2 logits, got " + nn::shape_string(logits.shape()));
    std::vector<std::array<double, 2>> out(logits.dim(0));
    for (int i = 0; i < logits.dim(0); ++i) out[i] = softmax2(logits[2 * i], logits[2 * i + 1]);
    return out;
}

std::vector<std::array<double, 2>> predict_proba(Classifier& model, const Tensor& batch) {
    if (batch.ndim() != 4 || batch.dim(1) != 3 || batch.dim(2) != kModelSide || batch.dim(3) != kModelSide)
        throw Error(ErrorCode::ShapeMismatch,
                    "expected N x 3 x 224 x 224 batch, got " + nn::shape_string(batch.shape()));
    nn::ForwardContext ctx;
    return softmax_rows(model.forward(batch, ctx));
}

// --- checkpoints -------------------------------------------------------------------------

void save_checkpoint(Classifier& model, CheckpointMeta meta, const std::filesystem::path& base) {
    const auto blob = std::filesystem::path(base.string() + ".lkpw");
    const auto sidecar = std::filesystem::path(base.string() + ".json");
    if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
    nn::write_tensors(blob, nn::state_dict(model));
    meta.spec = model.spec();
    meta.weights_sha256 = sha256_file(blob);
    json j = {{"schema", "leukopipe.checkpoint"},
              {"schema_version", CheckpointMeta::kSchemaVersion},
              {"model", spec_to_json(meta.spec)},
              {"train_config_digest", meta.train_config_digest},
              {"aug_config_digest", meta.aug_config_digest},
              {"epoch", meta.epoch},
              {"best_val_macro_f1", meta.best_val_macro_f1},
              {"global_seed", meta.global_seed},
              {"weights_file", blob.filename().string()},
              {"weights_sha256", meta.weights_sha256}};
    write_text_atomic(sidecar, j.dump(2) + "\n");
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& base) {
    const auto sidecar = std::filesystem::path(base.string() + ".json");
    json j;
    try {
        j = json::parse(read_text(sidecar));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, "bad checkpoint sidecar " + sidecar.string() + ": " + e.what());
    }
    if (j.value("schema_version", -1) != CheckpointMeta::kSchemaVersion)
        throw Error(ErrorCode::SchemaVersionMismatch, "unsupported checkpoint sidecar " + sidecar.string());
    try {
        CheckpointMeta m;
        m.spec = spec_from_json(j.at("model"));
        m.train_config_digest = j.at("train_config_digest").get<std::string>();
        m.aug_config_digest = j.at("aug_config_digest").get<std::string>();
        m.epoch = j.at("epoch").get<int>();
        m.best_val_macro_f1 = j.at("best_val_macro_f1").get<double>();
        m.global_seed = j.at("global_seed").get<std::uint64_t>();
        m.weights_sha256 = j.at("weights_sha256").get<std::string>();
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, "bad checkpoint sidecar " + sidecar.string() + ": " + e.what());
    }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& base, const std::optional<std::string>& expected_train_digest,
                                 const std::optional<std::string>& expected_aug_digest) {
    LoadedCheckpoint out;
    out.meta = read_checkpoint_meta(base);
    const auto blob = std::filesystem::path(base.string() + ".lkpw");
    if (!std::filesystem::exists(blob)) throw Error(ErrorCode::IoFailure, "missing checkpoint blob " + blob.string());
    const std::string actual = sha256_file(blob);
    if (actual != out.meta.weights_sha256)
        throw Error(ErrorCode::ChecksumMismatch, "checkpoint blob hash mismatch: " + blob.string(),
                    {out.meta.weights_sha256, actual});
    if (expected_train_digest && *expected_train_digest != out.meta.train_config_digest)
        throw Error(ErrorCode::ChecksumMismatch, "checkpoint was trained with a different train config",
                    {*expected_train_digest, out.meta.train_config_digest});
    if (expected_aug_digest && *expected_aug_digest != out.meta.aug_config_digest)
        throw Error(ErrorCode::ChecksumMismatch, "checkpoint was trained with a different augmentation config",
                    {*expected_aug_digest, out.meta.aug_config_digest});

    ModelSpec spec = out.meta.spec;
    spec.pretrained = false;
    auto layout = make_layout(spec.arch);
    out.model = std::make_unique<Classifier>(spec, std::move(layout.backbone), layout.dropout, layout.head_name);
    const auto result = nn::load_state_dict(*out.model, nn::read_tensors(blob));
    if (!result.missing.empty() || !result.unexpected.empty()) {
        auto details = result.missing;
        details.insert(details.end(), result.unexpected.begin(), result.unexpected.end());
        throw Error(ErrorCode::InvariantViolation, "checkpoint does not match its architecture", details);
    }
    return out;
}

}  // namespace leukopipe
