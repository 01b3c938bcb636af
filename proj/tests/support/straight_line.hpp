#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "abscam/imaging.hpp"
#include "abscam/model.hpp"

namespace abscam::testing {

/// Unbatched, single-threaded Abs-CAM written out step by step from the model
/// primitives. Kept deliberately naive; the library version must agree bit for bit.
inline Grid straight_line_abs_cam(const model::Classifier& net, const imaging::ImageTensor& image,
                                  const imaging::NormalizationStats& stats, const model::LayerRef& layer, int cls) {
    const auto input = imaging::normalize(image, stats);
    const Tensor3 A = model::feature_maps(net, input, layer).activations;
    const Tensor3 G = model::class_gradient(net, input, layer, cls).grads;
    const int H = image.height(), W = image.width();

    auto minmax = [](Grid g) {
        double lo = g.values[0], hi = g.values[0];
        for (double v : g.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (double& v : g.values) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        return g;
    };

    std::vector<Grid> masks;
    for (int k = 0; k < A.channels; ++k) {
        double total = 0.0;
        for (int i = 0; i < G.height; ++i)
            for (int j = 0; j < G.width; ++j) total += std::abs(G.at(k, i, j));
        const double w = total / static_cast<double>(G.height * G.width);
        Grid scaled(A.height, A.width);
        for (int i = 0; i < A.height; ++i)
            for (int j = 0; j < A.width; ++j) scaled.at(i, j) = w * A.at(k, i, j);
        masks.push_back(minmax(imaging::resize_bilinear(scaled, H, W)));
    }

    std::vector<double> scores;
    for (const Grid& m : masks) {
        const auto masked = imaging::multiply(image, m);
        scores.push_back(model::forward(net, imaging::normalize(masked, stats)).probs[cls]);
    }

    Grid out(H, W);
    for (std::size_t k = 0; k < masks.size(); ++k)
        for (std::size_t n = 0; n < out.size(); ++n) out.values[n] += scores[k] * masks[k].values[n];
    for (double& v : out.values) v = std::max(v, 0.0);
    return minmax(out);
}

} // namespace abscam::testing
