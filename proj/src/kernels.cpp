#include "cascade/kernels.hpp"

#include <cassert>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cascade::kernels {

namespace {

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline PairCounts counts_at(std::span<const double> scores, std::span<const unsigned char> gold,
                            std::size_t classes, double threshold) {
    PairCounts pc;
    const std::size_t rows = classes == 0 ? 0 : scores.size() / classes;
    for (std::size_t r = 0; r < rows; ++r) {
        bool any_pred = false;
        bool any_gold = false;
        for (std::size_t c = 0; c < classes; ++c) {
            const bool p = scores[r * classes + c] >= threshold;
            const bool g = gold[r * classes + c] != 0;
            any_pred |= p;
            any_gold |= g;
            pc.tp += p && g;
            pc.fp += p && !g;
            pc.fn += !p && g;
        }
        // OOS pseudo-label
        pc.tp += !any_pred && !any_gold;
        pc.fp += !any_pred && any_gold;
        pc.fn += any_pred && !any_gold;
    }
    return pc;
}

} // namespace

namespace serial {

void dot_rows(std::span<const double> query, std::span<const double> matrix, std::span<double> out) {
    const std::size_t dim = query.size();
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = dot(query.data(), matrix.data() + r * dim, dim);
}

double mean_dot(std::span<const double> query, std::span<const double> matrix) {
    const std::size_t dim = query.size();
    const std::size_t rows = matrix.size() / dim;
    double sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) sum += dot(query.data(), matrix.data() + r * dim, dim);
    return sum / static_cast<double>(rows);
}

void affine(std::span<const double> inputs, std::span<const double> weights, std::span<const double> bias,
            std::size_t dim, std::span<double> logits) {
    const std::size_t classes = bias.size();
    const std::size_t rows = inputs.size() / dim;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < classes; ++c)
            logits[r * classes + c] = dot(weights.data() + c * dim, inputs.data() + r * dim, dim) + bias[c];
}

void threshold_counts(std::span<const double> scores, std::span<const unsigned char> gold, std::size_t classes,
                      std::span<const double> thresholds, std::span<PairCounts> out) {
    for (std::size_t t = 0; t < thresholds.size(); ++t) out[t] = counts_at(scores, gold, classes, thresholds[t]);
}

} // namespace serial

void dot_rows(std::span<const double> query, std::span<const double> matrix, std::span<double> out) {
    const std::size_t dim = query.size();
    const auto rows = static_cast<long long>(out.size());
    assert(matrix.size() == out.size() * dim);
#pragma omp parallel for schedule(static) if (rows * static_cast<long long>(dim) > 16384)
    for (long long r = 0; r < rows; ++r)
        out[static_cast<std::size_t>(r)] = dot(query.data(), matrix.data() + static_cast<std::size_t>(r) * dim, dim);
}

double mean_dot(std::span<const double> query, std::span<const double> matrix) {
    const std::size_t rows = matrix.size() / query.size();
    std::vector<double> per_row(rows);
    dot_rows(query, matrix, per_row);
    // Sum in row order so the result matches the serial reference exactly.
    double sum = 0.0;
    for (double v : per_row) sum += v;
    return sum / static_cast<double>(rows);
}

void affine(std::span<const double> inputs, std::span<const double> weights, std::span<const double> bias,
            std::size_t dim, std::span<double> logits) {
    const std::size_t classes = bias.size();
    const auto rows = static_cast<long long>(inputs.size() / dim);
#pragma omp parallel for schedule(static) if (rows * static_cast<long long>(classes * dim) > 16384)
    for (long long r = 0; r < rows; ++r) {
        const auto row = static_cast<std::size_t>(r);
        for (std::size_t c = 0; c < classes; ++c)
            logits[row * classes + c] = dot(weights.data() + c * dim, inputs.data() + row * dim, dim) + bias[c];
    }
}

void threshold_counts(std::span<const double> scores, std::span<const unsigned char> gold, std::size_t classes,
                      std::span<const double> thresholds, std::span<PairCounts> out) {
    const auto n = static_cast<long long>(thresholds.size());
#pragma omp parallel for schedule(dynamic, 4) if (n > 8)
    for (long long t = 0; t < n; ++t) {
        const auto i = static_cast<std::size_t>(t);
        out[i] = counts_at(scores, gold, classes, thresholds[i]);
    }
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace cascade::kernels
