#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "leukopipe/error.hpp"
#include "leukopipe/hashing.hpp"
#include "leukopipe/metrics.hpp"
#include "oracles.hpp"

using namespace leukopipe;

namespace {

constexpr auto H = ClassLabel::HEM;
constexpr auto A = ClassLabel::ALL;

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no leukopipe::Error thrown";
    return ErrorCode::IoFailure;
}

PredictionSet make_set(std::vector<ClassLabel> labels, std::vector<double> scores) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < labels.size(); ++i) ids.push_back("r" + std::to_string(i));
    return PredictionSet::from_scores(std::move(ids), std::move(labels), std::move(scores));
}

struct Sample {
    std::vector<ClassLabel> labels;
    std::vector<double> scores;
};

// Scores on a coarse grid so ties are common.
Sample random_sample(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    Sample s;
    for (std::size_t i = 0; i < n; ++i) {
        s.labels.push_back(rng.randint(0, 2) ? A : H);
        s.scores.push_back(rng.randint(0, 21) / 20.0);
    }
    s.labels[0] = A;
    s.labels[1] = H;
    return s;
}

}  // namespace

TEST(Metrics, WorkedExample) {
    const auto preds = make_set({H, A, A, H}, {0.1, 0.9, 0.2, 0.3});
    EXPECT_EQ(preds.predicted, (std::vector<ClassLabel>{H, A, H, H}));
    const auto r = evaluate(preds);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
    EXPECT_DOUBLE_EQ(r.per_class[1].precision, 1.0);
    EXPECT_DOUBLE_EQ(r.per_class[1].recall, 0.5);
    EXPECT_NEAR(r.per_class[1].f1, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(r.per_class[0].precision, 2.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(r.per_class[0].recall, 1.0);
    EXPECT_NEAR(r.per_class[0].f1, 0.8, 1e-12);
    EXPECT_NEAR(r.macro_f1, (0.8 + 2.0 / 3.0) / 2.0, 1e-12);
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Metrics, ThresholdIsInclusive) {
    EXPECT_EQ(predict_label(0.5), A);
    EXPECT_EQ(predict_label(std::nextafter(0.5, 0.0)), H);
}

TEST(Metrics, ConfusionPerClassIsOneVsRest) {
    const auto c = confusion(make_set({H, A, A, H, A}, {0.7, 0.9, 0.2, 0.3, 0.6}));
    EXPECT_EQ(c[1], (ConfusionCounts{2, 1, 1, 1}));
    EXPECT_EQ(c[0], (ConfusionCounts{1, 1, 1, 2}));
}

TEST(Auc, WorkedExamples) {
    EXPECT_DOUBLE_EQ(auc({A, A, H, H}, {0.8, 0.4, 0.6, 0.2}), 0.75);
    EXPECT_DOUBLE_EQ(auc({A, H, A, H}, {0.3, 0.3, 0.3, 0.3}), 0.5);
    EXPECT_DOUBLE_EQ(auc({A, H}, {0.9, 0.1}), 1.0);
    EXPECT_DOUBLE_EQ(auc({A, H}, {0.1, 0.9}), 0.0);
}

TEST(Auc, AgreesWithPairCountAndTrapezoid) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto s = random_sample(seed, 3 + seed * 7);
        const double expected = oracle::pair_count_auc(s.labels, s.scores);
        EXPECT_NEAR(auc(s.labels, s.scores), expected, 1e-12) << seed;
        EXPECT_NEAR(auc_trapezoid(s.labels, s.scores), expected, 1e-12) << seed;
    }
}

TEST(Auc, InvariantUnderMonotoneTransformAndPermutation) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto s = random_sample(seed + 100, 60);
        const double base = auc(s.labels, s.scores);

        std::vector<double> squashed;
        for (double v : s.scores) squashed.push_back(1.0 / (1.0 + std::exp(-8.0 * (v - 0.3))));
        EXPECT_NEAR(auc(s.labels, squashed), base, 1e-12);

        std::vector<std::size_t> order(s.labels.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(seed);
        rng.shuffle(order.begin(), order.end());
        Sample p;
        for (auto i : order) {
            p.labels.push_back(s.labels[i]);
            p.scores.push_back(s.scores[i]);
        }
        EXPECT_NEAR(auc(p.labels, p.scores), base, 1e-12);

        std::vector<ClassLabel> swapped;
        for (auto l : s.labels) swapped.push_back(l == A ? H : A);
        EXPECT_NEAR(auc(swapped, s.scores), 1.0 - base, 1e-12);
    }
}

TEST(Auc, Errors) {
    EXPECT_EQ(code_of([] { auc({A, A}, {0.2, 0.4}); }), ErrorCode::SingleClassOnly);
    EXPECT_EQ(code_of([] { auc({}, {}); }), ErrorCode::EmptyInput);
    const auto r = evaluate(make_set({A, A}, {0.2, 0.9}));
    EXPECT_FALSE(r.auc.has_value());
    EXPECT_FALSE(r.warnings.empty());
}

TEST(Metrics, AgreeWithMatrixOracle) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto s = random_sample(seed + 1000, 1 + seed % 37);
        const auto preds = PredictionSet::from_scores(std::vector<std::string>(s.labels.size(), "x"), s.labels, s.scores);
        const auto r = evaluate(preds);
        const auto o = oracle::scores_from_matrix(oracle::confusion_matrix(s.labels, preds.predicted));
        EXPECT_NEAR(r.accuracy, o.accuracy, 1e-12);
        for (int c = 0; c < 2; ++c) {
            EXPECT_NEAR(r.per_class[c].precision, o.precision[c], 1e-12);
            EXPECT_NEAR(r.per_class[c].recall, o.recall[c], 1e-12);
            EXPECT_NEAR(r.per_class[c].f1, o.f1[c], 1e-12);
        }
        EXPECT_NEAR(r.macro_precision, o.macro_precision, 1e-12);
        EXPECT_NEAR(r.macro_recall, o.macro_recall, 1e-12);
        EXPECT_NEAR(r.macro_f1, o.macro_f1, 1e-12);
        EXPECT_GE(r.macro_f1, 0.0);
        EXPECT_LE(r.macro_f1, 1.0);
    }
}

TEST(Metrics, EqualOffDiagonalsGiveF1EqualToPrecisionAndRecall) {
    PerClassConfusion c;
    c[1] = {40, 7, 7, 46};
    c[0] = {46, 7, 7, 40};
    const auto r = macro_metrics(c);
    for (int k = 0; k < 2; ++k) {
        EXPECT_NEAR(r.per_class[k].f1, r.per_class[k].precision, 1e-12);
        EXPECT_NEAR(r.per_class[k].f1, r.per_class[k].recall, 1e-12);
    }
    EXPECT_NEAR(r.macro_f1, (40.0 / 47.0 + 46.0 / 53.0) / 2.0, 1e-12);
}

TEST(Metrics, BalancedClassesGiveMacroRecallEqualToAccuracy) {
    PerClassConfusion c;
    c[1] = {42, 13, 8, 37};
    c[0] = {37, 8, 13, 42};
    const auto r = macro_metrics(c);
    EXPECT_NEAR(r.macro_recall, r.accuracy, 1e-12);
    EXPECT_NEAR(r.accuracy, 0.79, 1e-12);
}

TEST(Metrics, ZeroDenominatorsWarn) {
    const auto r = evaluate(make_set({H, A, H}, {0.1, 0.2, 0.3}));
    EXPECT_EQ(r.per_class[1].precision, 0.0);
    EXPECT_EQ(r.per_class[1].recall, 0.0);
    EXPECT_EQ(r.per_class[1].f1, 0.0);
    EXPECT_EQ(r.warnings.size(), 2u);
    EXPECT_TRUE(std::all_of(r.warnings.begin(), r.warnings.end(),
                            [](const std::string& w) { return w.find("ALL") != std::string::npos; }));
}

TEST(Metrics, InputValidation) {
    EXPECT_EQ(code_of([] { evaluate(make_set({}, {})); }), ErrorCode::EmptyInput);
    EXPECT_EQ(code_of([] { make_set({A, H}, {0.5}).validate(); }), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([] { make_set({A, H}, {0.5, 1.5}).validate(); }), ErrorCode::InvalidConfig);
}

TEST(Metrics, PredictionsRoundTrip) {
    fixture::TempDir dir;
    const auto s = random_sample(5, 40);
    std::vector<double> scores = s.scores;
    scores[3] = 0.1 + 0.2;
    scores[4] = 1e-17;
    const auto preds = make_set(s.labels, scores);
    write_predictions(preds, dir / "p.jsonl");
    const auto back = read_predictions(dir / "p.jsonl");
    EXPECT_EQ(back.ids, preds.ids);
    EXPECT_EQ(back.labels, preds.labels);
    EXPECT_EQ(back.scores, preds.scores);
    EXPECT_EQ(back.predicted, preds.predicted);
}

TEST(Metrics, ReportJsonRoundTrip) {
    const auto r = evaluate(make_set({H, A, H, A, A}, {0.1, 0.9, 0.6, 0.4, 0.7}));
    const auto back = report_from_json(report_to_json(r));
    EXPECT_EQ(back.counts, r.counts);
    EXPECT_EQ(back.n, r.n);
    EXPECT_EQ(back.accuracy, r.accuracy);
    EXPECT_EQ(back.macro_f1, r.macro_f1);
    EXPECT_EQ(back.per_class[0].f1, r.per_class[0].f1);
    EXPECT_EQ(back.auc, r.auc);
    EXPECT_EQ(back.warnings, r.warnings);
    EXPECT_EQ(code_of([] { report_from_json("{\"n\": \"x\"}"); }), ErrorCode::ParseError);
}
