#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "leukopipe/backbone.hpp"
#include "leukopipe/dataset.hpp"
#include "leukopipe/metrics.hpp"

namespace leukopipe {

struct TrainConfig {
    int batch_size = 32;
    double learning_rate = 1e-4;
    int max_epochs = 50;
    int early_stop_patience = 15;
    /// A validation score must beat the best by more than this to count.
    double improvement_tolerance = 1e-6;
    std::uint64_t global_seed = 0;
    /// Batches decoded ahead of the training step.
    int prefetch_batches = 2;

    /// Throws InvalidConfig.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct LossAndGrad {
    double loss = 0.0;
    /// d loss / d logits, N x 2.
    nn::Tensor grad;
};

/// Mean negative log-likelihood of the true class over N x 2 logits, via a
/// log-sum-exp that never exponentiates a positive number.
/// Throws NonFiniteLogits and ShapeMismatch.
double cross_entropy(const nn::Tensor& logits, const std::vector<ClassLabel>& labels);
LossAndGrad cross_entropy_with_grad(const nn::Tensor& logits, const std::vector<ClassLabel>& labels);

enum class StopReason { EARLY_STOP, MAX_EPOCHS };
std::string to_string(StopReason reason);

/// Patience bookkeeping over 1-based epochs.
class EarlyStopping {
public:
    EarlyStopping(int patience, double tolerance);

    struct Decision {
        bool improved = false;
        bool stop = false;
    };
    Decision update(int epoch, double score);

    int best_epoch() const { return best_epoch_; }
    double best_score() const { return best_score_; }

private:
    int patience_;
    double tolerance_;
    int best_epoch_ = 0;
    double best_score_ = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double val_macro_f1 = 0.0;
    double wall_seconds = 0.0;
    bool checkpointed = false;
    /// SHA-256 over the ordered record ids of every batch in the epoch.
    std::string batch_order_digest;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    StopReason stop_reason = StopReason::MAX_EPOCHS;
    int best_epoch = 0;
    double best_val_macro_f1 = 0.0;

    std::string to_json() const;
    static TrainLog from_json(const std::string& text);
};

/// Feeds a scripted score sequence through EarlyStopping exactly as the
/// training loop does. Scores past the stop epoch are ignored.
TrainLog simulate_early_stopping(const std::vector<double>& val_scores, int patience, int max_epochs,
                                 double tolerance = 1e-6);

struct TrainOptions {
    /// Best checkpoint written to `<checkpoint_base>.lkpw/.json` when set.
    std::optional<std::filesystem::path> checkpoint_base;
    std::string train_config_digest;
    std::string aug_config_digest;
    ChannelTriple mean = kImageNetMean;
    ChannelTriple std = kImageNetStd;
    /// Called after every epoch.
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    TrainLog log;
    CheckpointMeta best;
};

/// Epochs of seed-shuffled mini-batches over TRAIN (originals and
/// augmented), macro F1 on INTERNAL_VAL after each, checkpoint on strict
/// improvement, early stop on patience. On return `model` holds the best
/// epoch's weights. Throws EmptySplit and DivergedLoss.
TrainResult train_loop(Classifier& model, const DatasetManifest& manifest, const TrainConfig& cfg,
                       const TrainOptions& options = {});

/// Eval-mode predictions for `records`.
PredictionSet predict_records(Classifier& model, const std::vector<ImageRecord>& records, int batch_size,
                              const ChannelTriple& mean = kImageNetMean, const ChannelTriple& std = kImageNetStd);

}  // namespace leukopipe
