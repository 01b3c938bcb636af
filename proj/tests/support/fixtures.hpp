#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <vector>

#include "abscam/imaging.hpp"
#include "abscam/model.hpp"

namespace abscam::testing {

/// Three deterministic 32×32 scenes used across the suites.
///   1: orange disk on a blue-green gradient
///   2: red and yellow squares on gray
///   3: diagonal stripes with seeded speckle
inline imaging::ImageTensor fixture_image(int which, int size = model::kReferenceInputSize) {
    imaging::ImageTensor img(size, size);
    const double s = size;
    std::mt19937_64 rng(0xF1C5 + which);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            double r = 0, g = 0, b = 0;
            if (which == 1) {
                r = 0.1;
                g = 0.3 + 0.4 * i / s;
                b = 0.8 - 0.5 * j / s;
                const double di = i - 0.45 * s, dj = j - 0.6 * s;
                if (di * di + dj * dj < (0.22 * s) * (0.22 * s)) {
                    r = 0.95;
                    g = 0.55;
                    b = 0.1;
                }
            } else if (which == 2) {
                r = g = b = 0.5;
                if (i > 0.15 * s && i < 0.45 * s && j > 0.1 * s && j < 0.4 * s) {
                    r = 0.9; g = 0.1; b = 0.1;
                }
                if (i > 0.55 * s && i < 0.9 * s && j > 0.5 * s && j < 0.85 * s) {
                    r = 0.95; g = 0.9; b = 0.2;
                }
            } else {
                const double stripe = 0.5 + 0.5 * std::sin((i + j) * 0.6);
                const double speckle = static_cast<double>(rng() % 1000) / 1000.0;
                r = 0.2 + 0.6 * stripe;
                g = 0.3 * speckle + 0.2;
                b = 0.9 - 0.6 * stripe;
            }
            img.set(i, j, 0, r);
            img.set(i, j, 1, g);
            img.set(i, j, 2, b);
        }
    return img;
}

/// Seeded image with independent uniform samples.
inline imaging::ImageTensor random_image(std::uint64_t seed, int height, int width) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> px(static_cast<std::size_t>(height) * width * 3);
    for (double& v : px) v = u(rng);
    return imaging::ImageTensor(height, width, std::move(px));
}

inline Grid random_grid(std::uint64_t seed, int height, int width) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Grid g(height, width);
    for (double& v : g.values) v = u(rng);
    return g;
}

/// FNV-1a over the bytes of a grid's doubles.
inline std::uint64_t checksum(const std::vector<double>& values) {
    std::uint64_t h = 1469598103934665603ull;
    for (double d : values) {
        unsigned char bytes[sizeof d];
        std::memcpy(bytes, &d, sizeof d);
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 1099511628211ull;
        }
    }
    return h;
}

} // namespace abscam::testing
