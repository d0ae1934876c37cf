#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "leukopipe/dataset.hpp"

namespace leukopipe {

/// Predicted label is ALL iff P(ALL) >= this.
inline constexpr double kDecisionThreshold = 0.5;

ClassLabel predict_label(double p_all);

struct PredictionSet {
    std::vector<std::string> ids;
    std::vector<ClassLabel> labels;
    /// P(ALL).
    std::vector<double> scores;
    std::vector<ClassLabel> predicted;

    std::size_t size() const { return labels.size(); }
    /// predicted is derived from scores with the decision threshold.
    static PredictionSet from_scores(std::vector<std::string> ids, std::vector<ClassLabel> labels,
                                     std::vector<double> scores);
    /// Throws EmptyInput or InvalidConfig (length or range violations).
    void validate() const;
};

/// One-vs-rest counts for one class.
struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Indexed by ClassLabel value.
using PerClassConfusion = std::array<ConfusionCounts, 2>;

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    PerClassConfusion counts;
    std::size_t n = 0;
    double accuracy = 0.0;
    std::array<ClassMetrics, 2> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    /// Absent when only one class is present.
    std::optional<double> auc;
    /// Zero-denominator conventions that were applied.
    std::vector<std::string> warnings;
};

/// Throws EmptyInput.
PerClassConfusion confusion(const PredictionSet& preds);

/// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); a zero denominator gives
/// 0 and a warning. Macro values are the unweighted two-class mean.
MetricsReport macro_metrics(const PerClassConfusion& counts);

/// Mann-Whitney statistic: fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. ALL is the positive class.
/// Throws SingleClassOnly.
double auc(const std::vector<ClassLabel>& labels, const std::vector<double>& scores);

/// Area under the empirical ROC curve by the trapezoid rule, with tied scores
/// forming one diagonal step.
double auc_trapezoid(const std::vector<ClassLabel>& labels, const std::vector<double>& scores);

/// confusion + macro_metrics + auc (absent if single-class).
MetricsReport evaluate(const PredictionSet& preds);

/// Line-delimited JSON records {"id", "label", "p_all"}.
void write_predictions(const PredictionSet& preds, const std::filesystem::path& path);
PredictionSet read_predictions(const std::filesystem::path& path);

/// JSON object with every field of the report.
std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

}  // namespace leukopipe
