#include "leukopipe/report.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "leukopipe/error.hpp"

namespace leukopipe {

namespace {

const std::vector<std::string> kMetricColumns = {"Accuracy", "Precision", "Recall", "F1",    "AUC",
                                                 "HEM_P",    "HEM_R",     "HEM_F1", "ALL_P", "ALL_R",
                                                 "ALL_F1"};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string md_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '|') out += '\\';
        out += c;
    }
    return out;
}

std::string markdown_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                           const std::vector<bool>& right_align) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = std::max<std::size_t>(3, header[c].size());
        for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
        std::string s = "|";
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string pad(width[c] - cells[c].size(), ' ');
            s += " " + (right_align[c] ? pad + cells[c] : cells[c] + pad) + " |";
        }
        return s + "\n";
    };
    std::string out = line(header);
    out += "|";
    for (std::size_t c = 0; c < header.size(); ++c)
        out += right_align[c] ? " " + std::string(width[c] - 1, '-') + ": |" : " " + std::string(width[c], '-') + " |";
    out += "\n";
    for (const auto& r : rows) out += line(r);
    return out;
}

std::string unquote(const std::string& v, std::size_t lineno) {
    if (v.size() < 2 || v.front() != '"' || v.back() != '"')
        throw Error(ErrorCode::MalformedLiteratureFile, "line " + std::to_string(lineno) + ": expected a quoted string");
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        if (v[i] == '\\' && i + 2 < v.size()) {
            ++i;
            out += v[i];
        } else if (v[i] == '"') {
            throw Error(ErrorCode::MalformedLiteratureFile, "line " + std::to_string(lineno) + ": stray quote");
        } else {
            out += v[i];
        }
    }
    return out;
}

}  // namespace

TableFormat parse_table_format(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "csv") return TableFormat::CSV;
    if (s == "md" || s == "markdown") return TableFormat::MARKDOWN;
    throw Error(ErrorCode::ConfigInvalid, "unknown table format '" + std::string(text) + "'");
}

std::string format_percent(double ratio) {
    const double scaled = ratio * 10000.0;
    const double fl = std::floor(scaled);
    const double frac = scaled - fl;
    double hundredths;
    if (std::fabs(frac - 0.5) < 1e-7) hundredths = std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
    else hundredths = std::round(scaled);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", hundredths / 100.0);
    return buf;
}

std::string emit_metrics_table(const std::vector<MetricsRow>& rows, TableFormat format) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& row : rows) {
        const auto& r = row.report;
        const auto& hem = r.per_class[static_cast<int>(ClassLabel::HEM)];
        const auto& all = r.per_class[static_cast<int>(ClassLabel::ALL)];
        cells.push_back({row.model, format_percent(r.accuracy), format_percent(r.macro_precision),
                         format_percent(r.macro_recall), format_percent(r.macro_f1),
                         r.auc ? format_percent(*r.auc) : "n/a", format_percent(hem.precision),
                         format_percent(hem.recall), format_percent(hem.f1), format_percent(all.precision),
                         format_percent(all.recall), format_percent(all.f1)});
    }
    std::vector<std::string> header = {"Model"};
    header.insert(header.end(), kMetricColumns.begin(), kMetricColumns.end());
    if (format == TableFormat::CSV) {
        std::string out;
        for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
        out += "\n";
        for (const auto& r : cells) {
            for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + csv_field(r[c]);
            out += "\n";
        }
        return out;
    }
    std::vector<bool> right(header.size(), true);
    right[0] = false;
    return markdown_table(header, cells, right);
}

std::vector<ParsedMetricsRow> parse_metrics_csv(const std::string& csv) {
    std::istringstream is(csv);
    std::string line;
    if (!std::getline(is, line)) throw Error(ErrorCode::ParseError, "empty metrics table");
    const auto header = split_csv_line(line);
    std::vector<ParsedMetricsRow> out;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) throw Error(ErrorCode::ParseError, "ragged metrics table row");
        ParsedMetricsRow row;
        row.model = fields[0];
        for (std::size_t c = 1; c < fields.size(); ++c) {
            if (fields[c] == "n/a") {
                row.values[header[c]] = std::nullopt;
                continue;
            }
            double v = 0.0;
            const auto res = std::from_chars(fields[c].data(), fields[c].data() + fields[c].size(), v);
            if (res.ec != std::errc()) throw Error(ErrorCode::ParseError, "bad number '" + fields[c] + "'");
            row.values[header[c]] = v / 100.0;
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<ComparisonRow> parse_literature(std::string_view text) {
    std::vector<ComparisonRow> rows;
    std::map<std::string, std::string> current;
    bool open = false;
    std::size_t table_line = 0;
    auto flush = [&] {
        if (!open) return;
        for (const char* key : {"name", "description", "f1"})
            if (!current.count(key))
                throw Error(ErrorCode::MalformedLiteratureFile,
                            "entry at line " + std::to_string(table_line) + " lacks '" + key + "'");
        ComparisonRow row;
        row.method = current["name"];
        row.description = current["description"];
        row.f1_text = current["f1"];
        const auto res = std::from_chars(row.f1_text.data(), row.f1_text.data() + row.f1_text.size(), row.f1_percent);
        if (res.ec != std::errc() || res.ptr != row.f1_text.data() + row.f1_text.size() || row.f1_percent < 0.0 ||
            row.f1_percent > 100.0)
            throw Error(ErrorCode::MalformedLiteratureFile,
                        "entry at line " + std::to_string(table_line) + ": f1 must be a number in [0, 100]");
        rows.push_back(std::move(row));
        current.clear();
    };

    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line == "[[method]]") {
            flush();
            open = true;
            table_line = lineno;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || !open)
            throw Error(ErrorCode::MalformedLiteratureFile, "line " + std::to_string(lineno) + ": unexpected '" + line + "'");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key == "name" || key == "description") value = unquote(value, lineno);
        else if (key != "f1")
            throw Error(ErrorCode::MalformedLiteratureFile, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (current.count(key))
            throw Error(ErrorCode::MalformedLiteratureFile, "line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        current[key] = value;
    }
    flush();
    return rows;
}

std::vector<ComparisonRow> load_literature(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::MalformedLiteratureFile, "cannot read literature file " + path.string());
    const std::string text{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
    return parse_literature(text);
}

std::filesystem::path default_literature_path() { return std::filesystem::path(LEUKOPIPE_DATA_DIR) / "literature.toml"; }

std::vector<ComparisonRow> comparison_rows(double own_f1, const std::vector<ComparisonRow>& literature,
                                           const std::string& own_name) {
    ComparisonRow own;
    own.method = own_name;
    own.description = "Transfer learning with class-balancing augmentation";
    own.f1_percent = own_f1 * 100.0;
    own.f1_text = format_percent(own_f1);
    own.source = RowSource::THIS_RUN;
    std::vector<ComparisonRow> rows = {own};
    for (auto r : literature) {
        r.source = RowSource::LITERATURE;
        rows.push_back(std::move(r));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ComparisonRow& a, const ComparisonRow& b) { return a.f1_percent > b.f1_percent; });
    return rows;
}

std::string emit_comparison(double own_f1, const std::vector<ComparisonRow>& literature, TableFormat format,
                            const std::string& own_name) {
    if (literature.empty()) spdlog::warn("literature list is empty; comparison has only this run");
    const auto rows = comparison_rows(own_f1, literature, own_name);
    if (format == TableFormat::CSV) {
        std::string out = "Rank,Method,Description,F1,Source\n";
        for (std::size_t i = 0; i < rows.size(); ++i)
            out += std::to_string(i + 1) + "," + csv_field(rows[i].method) + "," + csv_field(rows[i].description) +
                   "," + rows[i].f1_text + "," +
                   (rows[i].source == RowSource::THIS_RUN ? "THIS_RUN" : "LITERATURE") + "\n";
        return out;
    }
    std::vector<std::vector<std::string>> cells;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const bool own = rows[i].source == RowSource::THIS_RUN;
        auto wrap = [&](const std::string& s) { return own ? "**" + s + "**" : s; };
        cells.push_back({std::to_string(i + 1), wrap(md_escape(rows[i].method)), md_escape(rows[i].description),
                         wrap(rows[i].f1_text)});
    }
    return markdown_table({"Rank", "Method", "Description", "F1 (%)"}, cells, {true, false, false, true});
}

}  // namespace leukopipe
