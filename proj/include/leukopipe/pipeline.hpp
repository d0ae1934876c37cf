#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "leukopipe/config.hpp"
#include "leukopipe/metrics.hpp"
#include "leukopipe/train.hpp"

namespace leukopipe {

enum class Stage { INGEST, SPLIT, CARVE_VAL, AUGMENT, TRAIN, EVAL, REPORT };

inline constexpr std::array<Stage, 7> kAllStages{Stage::INGEST, Stage::SPLIT,  Stage::CARVE_VAL, Stage::AUGMENT,
                                                 Stage::TRAIN,  Stage::EVAL,   Stage::REPORT};

std::string to_string(Stage stage);
/// Comma-separated stage names ("ingest,split"); empty means all.
/// Throws ConfigInvalid.
std::vector<Stage> parse_stages(std::string_view text);

/// Layout of one run directory.
struct RunPaths {
    explicit RunPaths(std::filesystem::path root);

    std::filesystem::path root;
    std::filesystem::path manifest_dir, augmented_dir, checkpoints_dir, logs_dir, reports_dir, stages_dir;

    std::filesystem::path ingested_manifest() const { return manifest_dir / "ingested.jsonl"; }
    std::filesystem::path split_manifest() const { return manifest_dir / "split.jsonl"; }
    std::filesystem::path carved_manifest() const { return manifest_dir / "carved.jsonl"; }
    std::filesystem::path balanced_manifest() const { return manifest_dir / "balanced.jsonl"; }
    std::filesystem::path checkpoint_base() const { return checkpoints_dir / "best"; }
    std::filesystem::path train_log() const { return logs_dir / "train_log.json"; }
    std::filesystem::path predictions() const { return reports_dir / "predictions.jsonl"; }
    std::filesystem::path metrics_json() const { return reports_dir / "metrics.json"; }
    std::filesystem::path config_resolved() const { return root / "config.resolved"; }
    std::filesystem::path marker(Stage stage) const { return stages_dir / (to_string(stage) + ".done"); }

    void create() const;
};

enum class StageOutcome { RAN, SKIPPED };

struct PipelineResult {
    std::vector<std::pair<Stage, StageOutcome>> stages;
};

/// Runs `stages` in pipeline order. A stage whose completion marker matches
/// the current config is skipped unless `force`. A stage whose input
/// artifact is absent throws StagePrereqMissing; stage errors are rethrown
/// with the stage name prefixed.
PipelineResult run_pipeline(const RunConfig& cfg, const std::vector<Stage>& stages, bool force = false);

struct EvalResult {
    PredictionSet predictions;
    MetricsReport metrics;
};

/// Predictions and metrics for the TEST records of `manifest` under the
/// checkpoint at `checkpoint_base`.
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint_base, const DatasetManifest& manifest,
                               int batch_size, const PreprocessSection& preprocess,
                               const std::optional<std::string>& train_digest = std::nullopt,
                               const std::optional<std::string>& aug_digest = std::nullopt);

/// Human-readable model name for tables ("EfficientNet-B3").
std::string display_name(Arch arch);

/// Writes metrics.{csv,md} and comparison.{csv,md} under `reports_dir` and
/// returns the table in `format`.
std::string write_reports(const std::filesystem::path& reports_dir, const std::string& model_name,
                          const MetricsReport& metrics, const std::filesystem::path& literature, TableFormat format);

/// Writes `text` only when the file content differs; atomic replace.
void write_file_if_changed(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

}  // namespace leukopipe
