#pragma once

#include <cstddef>
#include <vector>

#include "abscam/imaging.hpp"
#include "abscam/model.hpp"

namespace abscam::testing {

/// Rank of every pixel in descending saliency, ties broken by scan position,
/// computed by pairwise counting.
inline std::vector<std::size_t> pairwise_ranks(const Grid& map) {
    std::vector<std::size_t> rank(map.size(), 0);
    for (std::size_t p = 0; p < map.size(); ++p)
        for (std::size_t q = 0; q < map.size(); ++q)
            if (map.values[q] > map.values[p] || (map.values[q] == map.values[p] && q < p)) ++rank[p];
    return rank;
}

/// Probability curve rebuilt from scratch at every step: pixel p shows `end` when
/// its rank is below ceil(t·N/steps), otherwise `start`.
inline std::vector<double> brute_force_curve(const model::Classifier& net, const imaging::NormalizationStats& stats,
                                             const imaging::ImageTensor& start, const imaging::ImageTensor& end,
                                             const Grid& map, int cls, int steps) {
    const auto rank = pairwise_ranks(map);
    const std::size_t n = map.size();
    std::vector<double> probs;
    for (int t = 0; t <= steps; ++t) {
        const std::size_t cut = (static_cast<std::size_t>(t) * n + steps - 1) / steps;
        std::vector<double> px(n * 3);
        for (std::size_t p = 0; p < n; ++p) {
            const int i = static_cast<int>(p) / map.width, j = static_cast<int>(p) % map.width;
            const auto& src = rank[p] < cut ? end : start;
            for (int c = 0; c < 3; ++c) px[p * 3 + c] = src.at(i, j, c);
        }
        const imaging::ImageTensor img(map.height, map.width, std::move(px));
        probs.push_back(model::forward(net, imaging::normalize(img, stats)).probs[cls]);
    }
    return probs;
}

/// Area under uniformly spaced samples on [0,1] by the composite trapezoid rule.
inline double uniform_trapezoid(const std::vector<double>& y) {
    const double h = 1.0 / static_cast<double>(y.size() - 1);
    double inner = 0.0;
    for (std::size_t i = 1; i + 1 < y.size(); ++i) inner += y[i];
    return h * (0.5 * y.front() + inner + 0.5 * y.back());
}

} // namespace abscam::testing
