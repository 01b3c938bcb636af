#include "abscam/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace abscam::imaging {

ImageTensor::ImageTensor(int height, int width, double fill)
    : height_(height), width_(width),
      pixels_(static_cast<std::size_t>(height) * width * 3, std::clamp(fill, 0.0, 1.0)) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("ImageTensor: dimensions must be positive");
}

ImageTensor::ImageTensor(int height, int width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("ImageTensor: dimensions must be positive");
    if (pixels_.size() != static_cast<std::size_t>(height) * width * 3)
        throw std::invalid_argument("ImageTensor: expected H*W*3 samples");
    for (double v : pixels_) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("ImageTensor: sample outside [0,1]");
    }
}

void ImageTensor::set(int i, int j, int c, double v) {
    pixels_[index(i, j, c)] = std::clamp(v, 0.0, 1.0);
}

NormalizedInput normalize(const ImageTensor& image, const NormalizationStats& stats) {
    for (double s : stats.std) {
        if (!(s > 0.0)) throw std::invalid_argument("normalize: std components must be positive");
    }
    NormalizedInput out{Tensor3(3, image.height(), image.width()), stats};
    for (int i = 0; i < image.height(); ++i)
        for (int j = 0; j < image.width(); ++j)
            for (int c = 0; c < 3; ++c)
                out.tensor.at(c, i, j) = (image.at(i, j, c) - stats.mean[c]) / stats.std[c];
    return out;
}

ImageTensor denormalize(const NormalizedInput& input) {
    const auto& t = input.tensor;
    if (t.channels != 3) throw std::invalid_argument("denormalize: expected 3 channels");
    ImageTensor out(t.height, t.width);
    for (int i = 0; i < t.height; ++i)
        for (int j = 0; j < t.width; ++j)
            for (int c = 0; c < 3; ++c)
                out.set(i, j, c, t.at(c, i, j) * input.stats.std[c] + input.stats.mean[c]);
    return out;
}

namespace {

struct Tap {
    int lo;
    int hi;
    double frac;
};

// Half-pixel-center sampling positions along one axis.
std::vector<Tap> bilinear_taps(int src, int dst) {
    std::vector<Tap> taps(dst);
    const double scale = static_cast<double>(src) / dst;
    for (int d = 0; d < dst; ++d) {
        double pos = (d + 0.5) * scale - 0.5;
        pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
        int lo = static_cast<int>(std::floor(pos));
        int hi = std::min(lo + 1, src - 1);
        taps[d] = {lo, hi, pos - lo};
    }
    return taps;
}

} // namespace

Grid resize_bilinear(const Grid& src, int height, int width) {
    if (src.height < 1 || src.width < 1) throw std::invalid_argument("resize_bilinear: empty source");
    if (height < 1 || width < 1) throw std::invalid_argument("resize_bilinear: target must be positive");
    const auto rows = bilinear_taps(src.height, height);
    const auto cols = bilinear_taps(src.width, width);
    Grid out(height, width);
    for (int i = 0; i < height; ++i) {
        const Tap& r = rows[i];
        for (int j = 0; j < width; ++j) {
            const Tap& c = cols[j];
            const double top = src.at(r.lo, c.lo) * (1.0 - c.frac) + src.at(r.lo, c.hi) * c.frac;
            const double bottom = src.at(r.hi, c.lo) * (1.0 - c.frac) + src.at(r.hi, c.hi) * c.frac;
            out.at(i, j) = top * (1.0 - r.frac) + bottom * r.frac;
        }
    }
    return out;
}

ImageTensor resize_bilinear(const ImageTensor& src, int height, int width) {
    ImageTensor out(height, width);
    for (int c = 0; c < 3; ++c) {
        Grid plane(src.height(), src.width());
        for (int i = 0; i < src.height(); ++i)
            for (int j = 0; j < src.width(); ++j) plane.at(i, j) = src.at(i, j, c);
        const Grid resized = resize_bilinear(plane, height, width);
        for (int i = 0; i < height; ++i)
            for (int j = 0; j < width; ++j) out.set(i, j, c, resized.at(i, j));
    }
    return out;
}

std::vector<std::size_t> saliency_order(const Grid& map) {
    std::vector<std::size_t> order(map.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return map.values[a] > map.values[b]; });
    return order;
}

BinaryMask topk_mask(const Grid& map, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("topk_mask: fraction must lie in (0,1]");
    for (double v : map.values) {
        if (!std::isfinite(v)) throw std::invalid_argument("topk_mask: map has non-finite values");
    }
    const std::size_t n = map.size();
    const auto count = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
    const auto order = saliency_order(map);
    BinaryMask mask{Grid(map.height, map.width), 0.0};
    for (std::size_t r = 0; r < count; ++r) mask.bits.values[order[r]] = 1.0;
    mask.covered_fraction = n == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(n);
    return mask;
}

int blur_radius(double sigma) {
    return 2 * static_cast<int>(std::ceil(2.0 * sigma)) + 1;
}

namespace {

// Half-sample symmetric extension: ... c b a | a b c | c b a ...
int mirror(int x, int n) {
    const int period = 2 * n;
    int m = x % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

std::vector<double> gaussian_kernel(double sigma) {
    const int r = blur_radius(sigma);
    std::vector<double> k(2 * r + 1);
    for (int t = -r; t <= r; ++t) k[t + r] = std::exp(-(t * t) / (2.0 * sigma * sigma));
    const double total = std::accumulate(k.begin(), k.end(), 0.0);
    for (double& v : k) v /= total;
    return k;
}

} // namespace

ImageTensor gaussian_blur(const ImageTensor& image, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
    const auto kernel = gaussian_kernel(sigma);
    const int r = static_cast<int>(kernel.size() / 2);
    const int h = image.height();
    const int w = image.width();

    std::vector<double> tmp(image.pixels().size());
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int t = -r; t <= r; ++t) acc += kernel[t + r] * image.at(i, mirror(j + t, w), c);
                tmp[(static_cast<std::size_t>(i) * w + j) * 3 + c] = acc;
            }

    ImageTensor out(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int t = -r; t <= r; ++t)
                    acc += kernel[t + r] * tmp[(static_cast<std::size_t>(mirror(i + t, h)) * w + j) * 3 + c];
                out.set(i, j, c, acc);
            }
    return out;
}

ImageTensor multiply(const ImageTensor& image, const Grid& mask) {
    if (mask.height != image.height() || mask.width != image.width())
        throw std::invalid_argument("multiply: mask dimensions differ from image");
    ImageTensor out(image.height(), image.width());
    for (int i = 0; i < image.height(); ++i)
        for (int j = 0; j < image.width(); ++j) {
            const double m = mask.at(i, j);
            for (int c = 0; c < 3; ++c) out.set(i, j, c, image.at(i, j, c) * m);
        }
    return out;
}

std::array<double, 3> colormap(double v) {
    static constexpr std::array<std::array<double, 3>, 5> knots{{
        {0.0, 0.0, 1.0},
        {0.0, 1.0, 1.0},
        {0.0, 1.0, 0.0},
        {1.0, 1.0, 0.0},
        {1.0, 0.0, 0.0},
    }};
    if (!(v > 0.0)) return knots.front();
    if (v >= 1.0) return knots.back();
    const double pos = v * 4.0;
    const int seg = std::min(static_cast<int>(pos), 3);
    const double t = pos - seg;
    std::array<double, 3> rgb{};
    for (int c = 0; c < 3; ++c) rgb[c] = knots[seg][c] * (1.0 - t) + knots[seg + 1][c] * t;
    return rgb;
}

ImageTensor overlay(const ImageTensor& image, const Grid& map, double alpha) {
    if (map.height != image.height() || map.width != image.width())
        throw std::invalid_argument("overlay: map dimensions differ from image");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("overlay: alpha must lie in [0,1]");
    ImageTensor out(image.height(), image.width());
    for (int i = 0; i < image.height(); ++i)
        for (int j = 0; j < image.width(); ++j) {
            const auto rgb = colormap(map.at(i, j));
            for (int c = 0; c < 3; ++c)
                out.set(i, j, c, (1.0 - alpha) * image.at(i, j, c) + alpha * rgb[c]);
        }
    return out;
}

} // namespace abscam::imaging
