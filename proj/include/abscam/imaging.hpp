#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "abscam/tensor.hpp"

namespace abscam::imaging {

/// H×W×3 image with every sample in [0,1], stored interleaved (row-major, RGB).
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(int height, int width, double fill = 0.0);
    /// Takes ownership of interleaved RGB samples; throws if any sample is outside [0,1].
    ImageTensor(int height, int width, std::vector<double> pixels);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }

    double at(int i, int j, int c) const { return pixels_[index(i, j, c)]; }
    /// Writes a sample, clamping to [0,1].
    void set(int i, int j, int c, double v);

    const std::vector<double>& pixels() const { return pixels_; }

    bool operator==(const ImageTensor&) const = default;

private:
    std::size_t index(int i, int j, int c) const {
        return (static_cast<std::size_t>(i) * width_ + j) * 3 + c;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> pixels_;
};

struct NormalizationStats {
    std::array<double, 3> mean{0.485, 0.456, 0.406};
    std::array<double, 3> std{0.229, 0.224, 0.225};
};

/// Model-space input: 3×H×W tensor plus the statistics that produced it.
struct NormalizedInput {
    Tensor3 tensor;
    NormalizationStats stats;
};

/// H×W 0/1 mask. covered_fraction is kept in sync with the bits.
struct BinaryMask {
    Grid bits;
    double covered_fraction = 0.0;
};

NormalizedInput normalize(const ImageTensor& image, const NormalizationStats& stats = {});
/// Inverse of normalize(); samples are clamped back into [0,1].
ImageTensor denormalize(const NormalizedInput& input);

/// Bilinear resize with half-pixel centers, no antialiasing.
Grid resize_bilinear(const Grid& src, int height, int width);
ImageTensor resize_bilinear(const ImageTensor& src, int height, int width);

/// Pixel indices sorted by descending value; equal values keep row-major scan order.
std::vector<std::size_t> saliency_order(const Grid& map);

/// Ones at the ceil(fraction·H·W) highest pixels. Ties go to the earlier scan position.
BinaryMask topk_mask(const Grid& map, double fraction);

/// Default blur width of the insertion baseline.
inline constexpr double kDefaultBlurSigma = 5.0;

/// Kernel radius used by gaussian_blur for a given sigma: 2·ceil(2σ)+1.
int blur_radius(double sigma);

/// Separable Gaussian blur with half-sample symmetric (mirror) padding.
ImageTensor gaussian_blur(const ImageTensor& image, double sigma);

/// image ⊙ mask, broadcast over the three channels. mask values must lie in [0,1].
ImageTensor multiply(const ImageTensor& image, const Grid& mask);

/// Fixed five-knot ramp: blue (0) → cyan → green → yellow → red (1). Input clamped to [0,1].
std::array<double, 3> colormap(double v);

/// (1-alpha)·image + alpha·colormap(map).
ImageTensor overlay(const ImageTensor& image, const Grid& map, double alpha);

// --- file I/O -----------------------------------------------------------

/// Decodes a PNG or JPEG file into [0,1] RGB. Gray/alpha/palette inputs are
/// converted and a warning is appended.
ImageTensor load_image(const std::filesystem::path& path, Warnings* warnings = nullptr);

struct Preprocessed {
    ImageTensor image;
    NormalizedInput input;
};

Preprocessed load_and_preprocess(const std::filesystem::path& path, int height, int width,
                                 const NormalizationStats& stats = {},
                                 Warnings* warnings = nullptr);

/// Writes an 8-bit RGB PNG (samples rounded to nearest).
void save_png(const ImageTensor& image, const std::filesystem::path& path);

/// Row-major CSV, one line per row, 6-decimal fixed point.
std::string map_to_csv(const Grid& map);
void save_map_csv(const Grid& map, const std::filesystem::path& path);

/// uint32 height, uint32 width, then H·W float32 samples; all little-endian.
std::vector<std::uint8_t> map_to_binary(const Grid& map);
Grid map_from_binary(const std::vector<std::uint8_t>& bytes);
void save_map_binary(const Grid& map, const std::filesystem::path& path);

} // namespace abscam::imaging
