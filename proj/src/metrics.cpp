#include "leukopipe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "leukopipe/error.hpp"

namespace leukopipe {

using nlohmann::json;

ClassLabel predict_label(double p_all) { return p_all >= kDecisionThreshold ? ClassLabel::ALL : ClassLabel::HEM; }

PredictionSet PredictionSet::from_scores(std::vector<std::string> ids, std::vector<ClassLabel> labels,
                                         std::vector<double> scores) {
    PredictionSet p;
    p.ids = std::move(ids);
    p.labels = std::move(labels);
    p.scores = std::move(scores);
    p.predicted.reserve(p.scores.size());
    for (double s : p.scores) p.predicted.push_back(predict_label(s));
    return p;
}

void PredictionSet::validate() const {
    if (labels.empty()) throw Error(ErrorCode::EmptyInput, "prediction set is empty");
    if (ids.size() != labels.size() || scores.size() != labels.size() || predicted.size() != labels.size())
        throw Error(ErrorCode::InvalidConfig, "prediction set lists differ in length");
    std::vector<std::string> bad;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) bad.push_back(ids[i]);
    if (!bad.empty()) throw Error(ErrorCode::InvalidConfig, "scores outside [0, 1]", bad);
}

PerClassConfusion confusion(const PredictionSet& preds) {
    if (preds.labels.empty()) throw Error(ErrorCode::EmptyInput, "prediction set is empty");
    if (preds.predicted.size() != preds.labels.size())
        throw Error(ErrorCode::InvalidConfig, "labels and predictions differ in length");
    PerClassConfusion out{};
    for (std::size_t i = 0; i < preds.labels.size(); ++i) {
        for (ClassLabel c : kClasses) {
            const bool actual = preds.labels[i] == c;
            const bool guessed = preds.predicted[i] == c;
            auto& k = out[static_cast<int>(c)];
            if (actual && guessed) ++k.tp;
            else if (!actual && guessed) ++k.fp;
            else if (actual) ++k.fn;
            else ++k.tn;
        }
    }
    return out;
}

MetricsReport macro_metrics(const PerClassConfusion& counts) {
    MetricsReport r;
    r.counts = counts;
    const auto& k0 = counts[0];
    r.n = k0.total();
    r.accuracy = r.n == 0 ? 0.0 : static_cast<double>(k0.tp + k0.tn) / static_cast<double>(r.n);
    for (ClassLabel c : kClasses) {
        const auto& k = counts[static_cast<int>(c)];
        auto& m = r.per_class[static_cast<int>(c)];
        if (k.tp + k.fp == 0) r.warnings.push_back("precision undefined for " + to_string(c) + "; set to 0");
        else m.precision = static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fp);
        if (k.tp + k.fn == 0) r.warnings.push_back("recall undefined for " + to_string(c) + "; set to 0");
        else m.recall = static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fn);
        if (m.precision + m.recall == 0.0) r.warnings.push_back("F1 undefined for " + to_string(c) + "; set to 0");
        else m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    r.macro_precision = (r.per_class[0].precision + r.per_class[1].precision) / 2.0;
    r.macro_recall = (r.per_class[0].recall + r.per_class[1].recall) / 2.0;
    r.macro_f1 = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
    for (const auto& w : r.warnings) spdlog::warn("{}", w);
    return r;
}

namespace {

std::pair<std::size_t, std::size_t> class_sizes(const std::vector<ClassLabel>& labels,
                                                const std::vector<double>& scores) {
    if (labels.empty()) throw Error(ErrorCode::EmptyInput, "no scores");
    if (labels.size() != scores.size()) throw Error(ErrorCode::InvalidConfig, "labels and scores differ in length");
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), ClassLabel::ALL));
    const auto neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClassOnly, "AUC needs both classes present");
    return {pos, neg};
}

}  // namespace

double auc(const std::vector<ClassLabel>& labels, const std::vector<double>& scores) {
    const auto [pos, neg] = class_sizes(labels, scores);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Mid-ranks (1-based) summed over positives.
    double pos_rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == ClassLabel::ALL) pos_rank_sum += mid_rank;
        i = j;
    }
    const double p = static_cast<double>(pos), q = static_cast<double>(neg);
    const double u = pos_rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * q);
}

double auc_trapezoid(const std::vector<ClassLabel>& labels, const std::vector<double>& scores) {
    const auto [pos, neg] = class_sizes(labels, scores);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double area = 0.0;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const std::size_t tp0 = tp, fp0 = fp;
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] == ClassLabel::ALL) ++tp;
            else ++fp;
            ++j;
        }
        const double x0 = static_cast<double>(fp0) / neg, x1 = static_cast<double>(fp) / neg;
        const double y0 = static_cast<double>(tp0) / pos, y1 = static_cast<double>(tp) / pos;
        area += (x1 - x0) * (y0 + y1) / 2.0;
        i = j;
    }
    return area;
}

MetricsReport evaluate(const PredictionSet& preds) {
    preds.validate();
    MetricsReport r = macro_metrics(confusion(preds));
    const bool both = std::count(preds.labels.begin(), preds.labels.end(), ClassLabel::ALL) > 0 &&
                      std::count(preds.labels.begin(), preds.labels.end(), ClassLabel::HEM) > 0;
    if (both) {
        r.auc = auc(preds.labels, preds.scores);
    } else {
        r.warnings.push_back("AUC undefined: only one class present");
        spdlog::warn("AUC undefined: only one class present");
    }
    return r;
}

void write_predictions(const PredictionSet& preds, const std::filesystem::path& path) {
    preds.validate();
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
        for (std::size_t i = 0; i < preds.size(); ++i) {
            json j = {{"id", preds.ids[i]},
                      {"label", static_cast<int>(preds.labels[i])},
                      {"p_all", preds.scores[i]}};
            os << j.dump() << '\n';
        }
        if (!os.flush()) throw Error(ErrorCode::IoFailure, "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

PredictionSet read_predictions(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<std::string> ids;
    std::vector<ClassLabel> labels;
    std::vector<double> scores;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            const int label = j.at("label").get<int>();
            if (label != 0 && label != 1) throw Error(ErrorCode::ParseError, "label must be 0 or 1");
            ids.push_back(j.at("id").get<std::string>());
            labels.push_back(static_cast<ClassLabel>(label));
            scores.push_back(j.at("p_all").get<double>());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    auto preds = PredictionSet::from_scores(std::move(ids), std::move(labels), std::move(scores));
    preds.validate();
    return preds;
}

std::string report_to_json(const MetricsReport& r) {
    json per_class = json::object();
    for (ClassLabel c : kClasses) {
        const auto& k = r.counts[static_cast<int>(c)];
        const auto& m = r.per_class[static_cast<int>(c)];
        per_class[to_string(c)] = {{"tp", k.tp},          {"fp", k.fp},        {"fn", k.fn}, {"tn", k.tn},
                                   {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    }
    json j = {{"n", r.n},
              {"accuracy", r.accuracy},
              {"macro_precision", r.macro_precision},
              {"macro_recall", r.macro_recall},
              {"macro_f1", r.macro_f1},
              {"auc", r.auc ? json(*r.auc) : json(nullptr)},
              {"per_class", per_class},
              {"warnings", r.warnings}};
    return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        MetricsReport r;
        r.n = j.at("n").get<std::size_t>();
        r.accuracy = j.at("accuracy").get<double>();
        r.macro_precision = j.at("macro_precision").get<double>();
        r.macro_recall = j.at("macro_recall").get<double>();
        r.macro_f1 = j.at("macro_f1").get<double>();
        if (!j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
        for (ClassLabel c : kClasses) {
            const json& pc = j.at("per_class").at(to_string(c));
            auto& k = r.counts[static_cast<int>(c)];
            auto& m = r.per_class[static_cast<int>(c)];
            k.tp = pc.at("tp").get<std::size_t>();
            k.fp = pc.at("fp").get<std::size_t>();
            k.fn = pc.at("fn").get<std::size_t>();
            k.tn = pc.at("tn").get<std::size_t>();
            m.precision = pc.at("precision").get<double>();
            m.recall = pc.at("recall").get<double>();
            m.f1 = pc.at("f1").get<double>();
        }
        r.warnings = j.value("warnings", std::vector<std::string>{});
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("bad metrics report: ") + e.what());
    }
}

}  // namespace leukopipe
