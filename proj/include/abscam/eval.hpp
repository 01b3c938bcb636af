#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "abscam/cam.hpp"
#include "abscam/imaging.hpp"
#include "abscam/model.hpp"

namespace abscam::eval {

struct CurvePoint {
    double fraction = 0.0;
    double prob = 0.0;
};

/// Faithfulness curve sampled at fractions t/steps, t = 0..steps.
struct EvalCurve {
    std::vector<CurvePoint> points;
    double auc = 0.0;
};

double trapezoid_auc(const std::vector<CurvePoint>& points);

struct CaseOutcome {
    double p_original = 0.0;
    double p_masked = 0.0;
    double drop = 0.0;  // max(0, p_orig - p_mask) / p_orig
    bool increased = false;
    bool excluded = false;  // p_orig == 0
};

struct DropIncreaseCase {
    const imaging::ImageTensor& image;
    const Grid& map;
    int class_index = 0;
};

struct DropIncreaseResult {
    double average_drop = 0.0;      // percent
    double average_increase = 0.0;  // percent
    int n_images = 0;               // cases that were not excluded
    std::vector<CaseOutcome> cases;
    Warnings warnings;
};

inline constexpr double kDefaultMaskFraction = 0.5;
inline constexpr int kDefaultSteps = 100;

/// Keeps the top `mask_fraction` pixels of the map (others set to black) and compares
/// the class probability against the unmasked image.
CaseOutcome drop_increase_case(const model::Classifier& model, const imaging::NormalizationStats& stats,
                               const imaging::ImageTensor& image, const Grid& map, int class_index,
                               double mask_fraction = kDefaultMaskFraction);

DropIncreaseResult average_drop_increase(const model::Classifier& model, const imaging::NormalizationStats& stats,
                                         const std::vector<DropIncreaseCase>& cases,
                                         double mask_fraction = kDefaultMaskFraction);

enum class Baseline { Zeros, Blur };

std::optional<Baseline> parse_baseline(std::string_view s);
std::string_view to_string(Baseline b);

/// Image whose pixels at saliency_order(map)[0..n_t) come from `end`, the rest from
/// `start`, with n_t = ceil(t·H·W/steps). Shared by the deletion and insertion curves.
imaging::ImageTensor curve_step_image(const imaging::ImageTensor& start, const imaging::ImageTensor& end,
                                      const std::vector<std::size_t>& order, int step, int steps);

/// Removes pixels in saliency order, replacing them with black (Zeros) or with the
/// blurred image (Blur).
EvalCurve deletion_curve(const model::Classifier& model, const imaging::NormalizationStats& stats,
                         const imaging::ImageTensor& image, const Grid& map, int class_index,
                         int steps = kDefaultSteps, Baseline baseline = Baseline::Zeros,
                         double sigma = imaging::kDefaultBlurSigma);

/// Starts from the blurred image and restores original pixels in saliency order.
EvalCurve insertion_curve(const model::Classifier& model, const imaging::NormalizationStats& stats,
                          const imaging::ImageTensor& image, const Grid& map, int class_index,
                          int steps = kDefaultSteps, double sigma = imaging::kDefaultBlurSigma);

// --- pointing game -------------------------------------------------------------

/// Half-open pixel box [x0,x1)×[y0,y1) in the coordinates of the source image.
struct BBox {
    std::string image_id;
    int class_label = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

class AnnotationParseError : public std::runtime_error {
public:
    AnnotationParseError(int line, const std::string& what);
    int line() const { return line_; }

private:
    int line_;
};

inline constexpr std::string_view kAnnotationHeader = "image_id,class_label,x0,y0,x1,y1";

/// Parses the comma-separated annotation format; the header line is mandatory.
std::vector<BBox> parse_annotations(std::string_view text);
std::vector<BBox> load_annotations(const std::filesystem::path& path);

struct PixelPos {
    int row = 0;
    int col = 0;
};

/// Largest value; ties go to the first position in scan order.
PixelPos argmax_pixel(const Grid& map);

struct PointingRecord {
    Grid map;
    std::vector<BBox> boxes;
    /// Size of the image the boxes refer to; 0 means "same as the map".
    int source_height = 0;
    int source_width = 0;
};

struct PointingResult {
    int hits = 0;
    int misses = 0;
    double accuracy = 0.0;
};

/// Whether the center of the map's argmax pixel, scaled to source coordinates, lies in any box.
bool pointing_hit(const PointingRecord& record);
PointingResult pointing_game(const std::vector<PointingRecord>& records);

// --- sanity check --------------------------------------------------------------

/// Spearman rank correlation with average ranks for ties; 0 when either map is constant.
double spearman(const Grid& a, const Grid& b);

struct SanityRow {
    std::string layer;
    double mean_similarity = 0.0;
    std::vector<double> per_seed;
};

/// For every parameterized layer (output → input) randomizes per `mode`, recomputes
/// the map with `method_id`, and records its Spearman similarity to the original map.
std::vector<SanityRow> sanity_check(const model::Classifier& model, const imaging::ImageTensor& image,
                                    const imaging::NormalizedInput& input, const model::LayerRef& layer,
                                    int class_index, const std::string& method_id, model::RandomizationMode mode,
                                    const std::vector<std::uint64_t>& seeds, const cam::MethodParams& params = {});

/// Fraction of adjacent pairs (in row order) whose similarity does not increase.
double non_increasing_fraction(const std::vector<SanityRow>& rows);

} // namespace abscam::eval
