#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace plab {

enum class Task { kClassification, kRegression };

struct Mcc {
    double value = 0.0;
    bool degenerate = false;  // zero denominator; value is reported as 0
};

struct Correlation {
    double value = 0.0;
    bool degenerate = false;  // constant input; value is reported as 0
};

/// (TP TN - FP FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN)).
Mcc mcc_binary(double tp, double tn, double fp, double fn);

/// Binary MCC for two classes, the multiclass generalisation otherwise.
Mcc mcc(std::span<const std::size_t> predicted, std::span<const std::size_t> actual,
        std::size_t n_classes);

/// 2 P R / (P + R); 0 when precision and recall are both 0.
double f1_binary(double tp, double fp, double fn);

/// F1 of class 1 for two classes, macro-averaged F1 otherwise.
double f1_score(std::span<const std::size_t> predicted, std::span<const std::size_t> actual,
                std::size_t n_classes);

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> actual);

Correlation pearson(std::span<const double> a, std::span<const double> b);

/// 1 - 6 sum d^2 / (n (n^2 - 1)) over average ranks.
Correlation spearman(std::span<const double> a, std::span<const double> b);

/// 1-based ranks; ties share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

struct MetricReport {
    Task task = Task::kClassification;
    std::optional<double> accuracy;
    std::optional<double> f1;
    std::optional<Mcc> mcc;
    std::optional<Correlation> pearson;
    std::optional<Correlation> spearman;
};

MetricReport classification_metrics(std::span<const std::size_t> predicted,
                                    std::span<const std::size_t> actual, std::size_t n_classes);
MetricReport regression_metrics(std::span<const double> predicted, std::span<const double> actual);

}  // namespace plab
