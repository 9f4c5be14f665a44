// Reference objective for gradient checks, written without the library's kernels.
#pragma once

#include <cmath>
#include <vector>

#include "cascade/classifier.hpp"
#include "cascade/random.hpp"

namespace cascade::testing {

inline HeadModel random_head(Rng& rng, std::size_t dim, std::size_t classes) {
    std::vector<IntentId> labels;
    for (std::size_t c = 0; c < classes; ++c) labels.push_back("l" + std::to_string(c));
    auto h = HeadModel::zeros(dim, labels);
    for (auto& w : h.weights) w = uniform01(rng) * 2 - 1;
    for (auto& b : h.bias) b = uniform01(rng) * 2 - 1;
    return h;
}

// mean BCE over (row, label) plus l2/2 ||W||^2
inline double reference_loss(const HeadModel& h, const std::vector<double>& x, const std::vector<unsigned char>& y,
                             double l2) {
    const std::size_t n = x.size() / h.dim, c = h.classes();
    double loss = 0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < c; ++k) {
            double z = h.bias[k];
            for (std::size_t d = 0; d < h.dim; ++d) z += h.weights[k * h.dim + d] * x[r * h.dim + d];
            const double p = 1.0 / (1.0 + std::exp(-z));
            loss -= y[r * c + k] ? std::log(p) : std::log(1 - p);
        }
    loss /= double(n * c);
    double ww = 0;
    for (double w : h.weights) ww += w * w;
    return loss + 0.5 * l2 * ww;
}

struct GradientCheck {
    double worst_relative = 0; // ||analytic - numeric|| / sqrt(||analytic||^2 + ||numeric||^2)
    double worst_loss_gap = 0;
};

// Central differences on `instances` random small heads.
inline GradientCheck gradient_check(std::uint64_t seed, int instances, double h = 1e-6) {
    Rng rng(seed);
    GradientCheck out;
    for (int instance = 0; instance < instances; ++instance) {
        const std::size_t dim = 2 + uniform_index(rng, 6), classes = 1 + uniform_index(rng, 4);
        const std::size_t n = 1 + uniform_index(rng, 8);
        auto head = random_head(rng, dim, classes);
        std::vector<double> x(n * dim);
        for (auto& v : x) v = uniform01(rng) * 2 - 1;
        std::vector<unsigned char> y(n * classes);
        for (auto& v : y) v = bernoulli(rng, 0.4);
        const double l2 = uniform01(rng) * 0.1;

        const auto g = loss_and_gradient(head, x, y, l2);
        const double ref = reference_loss(head, x, y, l2);
        out.worst_loss_gap = std::max(out.worst_loss_gap, std::abs(g.loss - ref) / std::max(1.0, std::abs(ref)));

        double diff = 0, scale = 0;
        auto probe = [&](double& param, double analytic) {
            const double saved = param;
            param = saved + h;
            const double up = reference_loss(head, x, y, l2);
            param = saved - h;
            const double down = reference_loss(head, x, y, l2);
            param = saved;
            const double numeric = (up - down) / (2 * h);
            diff += (analytic - numeric) * (analytic - numeric);
            scale += analytic * analytic + numeric * numeric;
        };
        for (std::size_t i = 0; i < head.weights.size(); ++i) probe(head.weights[i], g.grad_weights[i]);
        for (std::size_t i = 0; i < head.bias.size(); ++i) probe(head.bias[i], g.grad_bias[i]);
        out.worst_relative = std::max(out.worst_relative, std::sqrt(diff) / std::sqrt(scale));
    }
    return out;
}

} // namespace cascade::testing
