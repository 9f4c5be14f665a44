#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Data-parallel inner loops. Every kernel has a `serial` reference that the
// tests compare against; the unqualified versions use OpenMP when available.
// Parallel kernels only split over independent outputs, never reduce across
// threads, so both versions produce bit-identical results.
namespace cascade::kernels {

// out[r] = <query, matrix[r]> for a row-major matrix of width query.size().
void dot_rows(std::span<const double> query, std::span<const double> matrix, std::span<double> out);

// Mean of dot_rows over all rows. Rows must be non-empty.
double mean_dot(std::span<const double> query, std::span<const double> matrix);

// logits[r * C + c] = <weights[c], inputs[r]> + bias[c]
// weights is C x dim row-major, inputs is N x dim row-major.
void affine(std::span<const double> inputs, std::span<const double> weights, std::span<const double> bias,
            std::size_t dim, std::span<double> logits);

// Micro-F1 pair counts of thresholded multi-label predictions, one entry per
// candidate threshold. `scores` is N x C; `gold` is N x C in {0,1}; a row
// with no label at or above the threshold is predicted OOS and a row with no
// gold label is gold OOS (OOS is scored as one extra class).
struct PairCounts {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
};
void threshold_counts(std::span<const double> scores, std::span<const unsigned char> gold, std::size_t classes,
                      std::span<const double> thresholds, std::span<PairCounts> out);

namespace serial {
void dot_rows(std::span<const double> query, std::span<const double> matrix, std::span<double> out);
double mean_dot(std::span<const double> query, std::span<const double> matrix);
void affine(std::span<const double> inputs, std::span<const double> weights, std::span<const double> bias,
            std::size_t dim, std::span<double> logits);
void threshold_counts(std::span<const double> scores, std::span<const unsigned char> gold, std::size_t classes,
                      std::span<const double> thresholds, std::span<PairCounts> out);
} // namespace serial

int max_threads();

} // namespace cascade::kernels
