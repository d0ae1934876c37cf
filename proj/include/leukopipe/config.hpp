#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "leukopipe/augment.hpp"
#include "leukopipe/backbone.hpp"
#include "leukopipe/report.hpp"
#include "leukopipe/train.hpp"

namespace leukopipe {

struct DatasetSection {
    std::vector<std::filesystem::path> sources;
    /// Absent: the C-NMC directory-name rule.
    std::optional<std::filesystem::path> label_rules;
    std::vector<std::string> extensions{".bmp", ".png", ".jpg", ".jpeg"};
};

struct SplitSection {
    double test_fraction = 0.1;
    double val_fraction = 0.1;
};

struct AugmentSection {
    std::size_t target = 10000;
    ParentSampling sampling = ParentSampling::ROUND_ROBIN;
    unsigned workers = 1;
    AugmentationConfig transforms;
};

struct PreprocessSection {
    ChannelTriple mean = kImageNetMean;
    ChannelTriple std = kImageNetStd;
};

struct ModelSection {
    Arch arch = Arch::EFFNET_B3;
    bool pretrained = true;
    bool freeze_backbone = false;
    /// Absent: derived from the global seed.
    std::optional<std::uint64_t> head_seed;
    std::filesystem::path weights_dir;
};

struct ReportSection {
    std::optional<std::filesystem::path> literature;
    TableFormat format = TableFormat::MARKDOWN;
};

/// Everything one pipeline run needs, fully resolved.
struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path run_dir;
    DatasetSection dataset;
    SplitSection split;
    AugmentSection augment;
    PreprocessSection preprocess;
    ModelSection model;
    TrainConfig train;
    ReportSection report;

    /// Stage seeds, all derived from `seed` by label.
    std::uint64_t split_seed() const;
    std::uint64_t carve_seed() const;
    std::uint64_t balance_seed() const;
    std::uint64_t train_seed() const;
    std::uint64_t head_seed() const;

    ModelSpec model_spec() const;
    TrainConfig train_config() const;

    /// Throws ConfigInvalid listing every problem.
    void validate() const;
};

using EnvMap = std::map<std::string, std::string>;

/// LEUKOPIPE_* variables of the current process.
EnvMap leukopipe_environment();

/// Defaults <- file <- environment (`LEUKOPIPE_<SECTION>_<KEY>`, section
/// GLOBAL for the top-level keys) <- `overrides` ("section.key=value").
/// Relative paths resolve against the config file's directory.
/// Throws ConfigInvalid.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const EnvMap& env = {},
                          const std::vector<std::string>& overrides = {});

/// Same layering over an in-memory JSON document.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir, const EnvMap& env = {},
                           const std::vector<std::string>& overrides = {});

/// Canonical JSON with every value concrete; feeding it back to
/// parse_run_config reproduces the config.
std::string resolved_json(const RunConfig& cfg);

/// SHA-256 of the canonical JSON of one section.
std::string train_config_digest(const RunConfig& cfg);
std::string aug_config_digest(const RunConfig& cfg);

}  // namespace leukopipe
