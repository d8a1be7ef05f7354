#include "plab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plab/error.hpp"

namespace plab {

namespace {

void check_pair(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": lengths " + std::to_string(a) + " and " +
                             std::to_string(b) + " differ");
    }
    if (a == 0) throw DataError(std::string(what) + ": empty input");
}

std::vector<double> confusion(std::span<const std::size_t> predicted,
                              std::span<const std::size_t> actual, std::size_t k) {
    std::vector<double> m(k * k, 0.0);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] >= k || actual[i] >= k) {
            throw DataError("class index outside [0, " + std::to_string(k) + ") at position " +
                            std::to_string(i));
        }
        m[actual[i] * k + predicted[i]] += 1.0;
    }
    return m;
}

}  // namespace

Mcc mcc_binary(double tp, double tn, double fp, double fn) {
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom == 0.0) return {0.0, true};
    return {(tp * tn - fp * fn) / std::sqrt(denom), false};
}

Mcc mcc(std::span<const std::size_t> predicted, std::span<const std::size_t> actual,
        std::size_t n_classes) {
    check_pair(predicted.size(), actual.size(), "mcc");
    const std::size_t k = std::max<std::size_t>(n_classes, 2);
    const auto m = confusion(predicted, actual, k);
    if (k == 2) return mcc_binary(m[3], m[0], m[1], m[2]);

    double correct = 0, total = 0, pt = 0, pp = 0, tt = 0;
    for (std::size_t c = 0; c < k; ++c) {
        double t = 0, p = 0;
        for (std::size_t j = 0; j < k; ++j) {
            t += m[c * k + j];
            p += m[j * k + c];
        }
        correct += m[c * k + c];
        total += t;
        pt += p * t;
        pp += p * p;
        tt += t * t;
    }
    const double denom = (total * total - pp) * (total * total - tt);
    if (denom == 0.0) return {0.0, true};
    return {(correct * total - pt) / std::sqrt(denom), false};
}

double f1_binary(double tp, double fp, double fn) {
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * (precision * recall) / (precision + recall);
}

double f1_score(std::span<const std::size_t> predicted, std::span<const std::size_t> actual,
                std::size_t n_classes) {
    check_pair(predicted.size(), actual.size(), "f1");
    const std::size_t k = std::max<std::size_t>(n_classes, 2);
    const auto m = confusion(predicted, actual, k);
    auto class_f1 = [&](std::size_t c) {
        double tp = m[c * k + c], fp = 0, fn = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == c) continue;
            fp += m[j * k + c];
            fn += m[c * k + j];
        }
        return f1_binary(tp, fp, fn);
    };
    if (k == 2) return class_f1(1);
    double total = 0;
    for (std::size_t c = 0; c < k; ++c) total += class_f1(c);
    return total / static_cast<double>(k);
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> actual) {
    check_pair(predicted.size(), actual.size(), "accuracy");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == actual[i];
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

Correlation pearson(std::span<const double> a, std::span<const double> b) {
    check_pair(a.size(), b.size(), "pearson");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return {0.0, true};
    return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), false};
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

Correlation spearman(std::span<const double> a, std::span<const double> b) {
    check_pair(a.size(), b.size(), "spearman");
    const std::size_t n = a.size();
    if (n < 2) return {0.0, true};
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    double d2 = 0;
    for (std::size_t i = 0; i < n; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    const double nn = static_cast<double>(n);
    return {1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0)), false};
}

MetricReport classification_metrics(std::span<const std::size_t> predicted,
                                    std::span<const std::size_t> actual, std::size_t n_classes) {
    MetricReport r;
    r.task = Task::kClassification;
    r.accuracy = accuracy(predicted, actual);
    r.f1 = f1_score(predicted, actual, n_classes);
    r.mcc = mcc(predicted, actual, n_classes);
    return r;
}

MetricReport regression_metrics(std::span<const double> predicted, std::span<const double> actual) {
    MetricReport r;
    r.task = Task::kRegression;
    r.pearson = pearson(predicted, actual);
    r.spearman = spearman(predicted, actual);
    return r;
}

}  // namespace plab
