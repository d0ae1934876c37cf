#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "leukopipe/metrics.hpp"

namespace leukopipe {

enum class TableFormat { CSV, MARKDOWN };
TableFormat parse_table_format(std::string_view text);

/// ratio * 100 to two decimals, ties to even ("94.30").
std::string format_percent(double ratio);

struct MetricsRow {
    std::string model;
    MetricsReport report;
};

/// One row per model, input order kept. Columns: Model, Accuracy, Precision,
/// Recall, F1, AUC (macro values), then per-class P/R/F1 for HEM and ALL.
std::string emit_metrics_table(const std::vector<MetricsRow>& rows, TableFormat format);

/// Column name -> value as a ratio (absent for "n/a"), per CSV row.
struct ParsedMetricsRow {
    std::string model;
    std::map<std::string, std::optional<double>> values;
};
std::vector<ParsedMetricsRow> parse_metrics_csv(const std::string& csv);

enum class RowSource { LITERATURE, THIS_RUN };

struct ComparisonRow {
    std::string method;
    std::string description;
    double f1_percent = 0.0;
    /// The F1 exactly as written in the literature file (or as formatted).
    std::string f1_text;
    RowSource source = RowSource::LITERATURE;
};

/// `[[method]]` tables with `name`, `description` and `f1` keys; '#'
/// comments. Throws MalformedLiteratureFile.
std::vector<ComparisonRow> parse_literature(std::string_view text);
std::vector<ComparisonRow> load_literature(const std::filesystem::path& path);
/// The bundled published-results file.
std::filesystem::path default_literature_path();

/// Literature rows plus this run, sorted by F1 descending (this run first
/// among equals).
std::vector<ComparisonRow> comparison_rows(double own_f1, const std::vector<ComparisonRow>& literature,
                                           const std::string& own_name = "Our Model (this run)");

/// THIS_RUN is bold in markdown and tagged in the CSV source column.
std::string emit_comparison(double own_f1, const std::vector<ComparisonRow>& literature, TableFormat format,
                            const std::string& own_name = "Our Model (this run)");

}  // namespace leukopipe
