#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "leukopipe/dataset.hpp"
#include "leukopipe/image.hpp"

namespace oracle {

using leukopipe::ClassLabel;

/// 2x2 matrix m[actual][predicted], counted item by item.
using Matrix = std::array<std::array<std::size_t, 2>, 2>;
Matrix confusion_matrix(const std::vector<ClassLabel>& labels, const std::vector<ClassLabel>& predicted);

struct Scores {
    double accuracy;
    std::array<double, 2> precision, recall, f1;
    double macro_precision, macro_recall, macro_f1;
};
/// Metrics read straight off the 2x2 matrix, zero-denominator -> 0.
Scores scores_from_matrix(const Matrix& m);

/// Exhaustive (positive, negative) pair enumeration with half credit for ties.
double pair_count_auc(const std::vector<ClassLabel>& labels, const std::vector<double>& scores);

/// Natural-log softmax cross-entropy, computed naively in long double.
long double naive_cross_entropy(const std::vector<std::array<double, 2>>& logits, const std::vector<ClassLabel>& labels);

/// L2-regularized logistic regression on raw pixels, trained by full-batch
/// gradient descent on standardized features. Returns predictions for `test`.
std::vector<ClassLabel> logistic_regression(const std::vector<leukopipe::Image>& train,
                                            const std::vector<ClassLabel>& train_labels,
                                            const std::vector<leukopipe::Image>& test, int iterations = 300);

/// Macro F1 of predictions, recomputed from the matrix.
double macro_f1(const std::vector<ClassLabel>& labels, const std::vector<ClassLabel>& predicted);

}  // namespace oracle
