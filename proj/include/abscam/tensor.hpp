#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace abscam {

/// Error raised when an input file cannot be read or decoded.
class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Error raised by the model adapter (shape mismatch, unknown layer, ...).
class AdapterError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Error raised when a NaN/Inf shows up inside a method stage.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Free-form warning records collected by operations that degrade gracefully.
using Warnings = std::vector<std::string>;

/// Row-major 2-D grid of doubles.
struct Grid {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {
        if (h < 0 || w < 0) throw std::invalid_argument("Grid: negative dimension");
    }

    std::size_t size() const { return values.size(); }
    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * width + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * width + j]; }

    bool operator==(const Grid&) const = default;
};

/// Channel-major C×H×W tensor of doubles, the activation currency of the model.
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    Tensor3() = default;
    Tensor3(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          values(static_cast<std::size_t>(c) * h * w, fill) {
        if (c < 0 || h < 0 || w < 0) throw std::invalid_argument("Tensor3: negative dimension");
    }

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return values.size(); }

    double& at(int c, int i, int j) {
        return values[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(i) * width + j];
    }
    double at(int c, int i, int j) const {
        return values[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(i) * width + j];
    }

    std::span<double> channel(int c) {
        return {values.data() + static_cast<std::size_t>(c) * plane(), plane()};
    }
    std::span<const double> channel(int c) const {
        return {values.data() + static_cast<std::size_t>(c) * plane(), plane()};
    }

    Grid channel_grid(int c) const {
        Grid g(height, width);
        auto src = channel(c);
        std::copy(src.begin(), src.end(), g.values.begin());
        return g;
    }

    bool operator==(const Tensor3&) const = default;
};

} // namespace abscam
