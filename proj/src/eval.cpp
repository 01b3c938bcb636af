#include "abscam/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace abscam::eval {

double trapezoid_auc(const std::vector<CurvePoint>& points) {
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        area += (points[i].fraction - points[i - 1].fraction) * (points[i].prob + points[i - 1].prob) * 0.5;
    return area;
}

CaseOutcome drop_increase_case(const model::Classifier& model, const imaging::NormalizationStats& stats,
                               const imaging::ImageTensor& image, const Grid& map, int class_index,
                               double mask_fraction) {
    if (map.height != image.height() || map.width != image.width())
        throw std::invalid_argument("drop/increase: map dimensions differ from image");
    const auto mask = imaging::topk_mask(map, mask_fraction);
    CaseOutcome out;
    out.p_original = model::score(model::forward(model, imaging::normalize(image, stats)), class_index).prob;
    out.p_masked = cam::masked_score(model, image, stats, mask.bits, class_index);
    if (out.p_original == 0.0) {
        out.excluded = true;
        return out;
    }
    out.drop = std::max(0.0, out.p_original - out.p_masked) / out.p_original;
    out.increased = out.p_masked > out.p_original;
    return out;
}

DropIncreaseResult average_drop_increase(const model::Classifier& model, const imaging::NormalizationStats& stats,
                                         const std::vector<DropIncreaseCase>& cases, double mask_fraction) {
    if (cases.empty()) throw std::invalid_argument("average_drop_increase: no cases");
    DropIncreaseResult result;
    double drop_sum = 0.0;
    int increases = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        auto outcome = drop_increase_case(model, stats, c.image, c.map, c.class_index, mask_fraction);
        if (outcome.excluded) {
            result.warnings.push_back("case " + std::to_string(i) + " excluded: original probability is 0");
        } else {
            drop_sum += outcome.drop;
            increases += outcome.increased ? 1 : 0;
            ++result.n_images;
        }
        result.cases.push_back(outcome);
    }
    if (result.n_images > 0) {
        result.average_drop = 100.0 * drop_sum / result.n_images;
        result.average_increase = 100.0 * increases / result.n_images;
    }
    return result;
}

std::optional<Baseline> parse_baseline(std::string_view s) {
    if (s == "zeros") return Baseline::Zeros;
    if (s == "blur") return Baseline::Blur;
    return std::nullopt;
}

std::string_view to_string(Baseline b) { return b == Baseline::Zeros ? "zeros" : "blur"; }

namespace {

std::size_t step_count(int step, int steps, std::size_t pixels) {
    const auto n = static_cast<std::size_t>(
        std::ceil(static_cast<double>(step) * static_cast<double>(pixels) / static_cast<double>(steps)));
    return std::min(n, pixels);
}

void copy_pixel(imaging::ImageTensor& dst, const imaging::ImageTensor& src, std::size_t p) {
    const int i = static_cast<int>(p / static_cast<std::size_t>(src.width()));
    const int j = static_cast<int>(p % static_cast<std::size_t>(src.width()));
    for (int c = 0; c < 3; ++c) dst.set(i, j, c, src.at(i, j, c));
}

EvalCurve replay(const model::Classifier& model, const imaging::NormalizationStats& stats,
                 const imaging::ImageTensor& start, const imaging::ImageTensor& end, const Grid& map,
                 int class_index, int steps) {
    if (steps < 1) throw std::invalid_argument("curve: steps must be at least 1");
    if (map.height != start.height() || map.width != start.width())
        throw std::invalid_argument("curve: map dimensions differ from image");
    const auto order = imaging::saliency_order(map);
    imaging::ImageTensor current = start;
    std::size_t applied = 0;
    EvalCurve curve;
    curve.points.reserve(steps + 1);
    for (int t = 0; t <= steps; ++t) {
        const std::size_t target = step_count(t, steps, order.size());
        for (; applied < target; ++applied) copy_pixel(current, end, order[applied]);
        const double prob =
            model::score(model::forward(model, imaging::normalize(current, stats)), class_index).prob;
        curve.points.push_back({static_cast<double>(t) / steps, prob});
    }
    curve.auc = trapezoid_auc(curve.points);
    return curve;
}

} // namespace

imaging::ImageTensor curve_step_image(const imaging::ImageTensor& start, const imaging::ImageTensor& end,
                                      const std::vector<std::size_t>& order, int step, int steps) {
    imaging::ImageTensor out = start;
    const auto n = step_count(step, steps, order.size());
    for (std::size_t r = 0; r < n; ++r) copy_pixel(out, end, order[r]);
    return out;
}

EvalCurve deletion_curve(const model::Classifier& model, const imaging::NormalizationStats& stats,
                         const imaging::ImageTensor& image, const Grid& map, int class_index, int steps,
                         Baseline baseline, double sigma) {
    const imaging::ImageTensor fill = baseline == Baseline::Zeros ? imaging::ImageTensor(image.height(), image.width(), 0.0)
                                                                  : imaging::gaussian_blur(image, sigma);
    return replay(model, stats, image, fill, map, class_index, steps);
}

EvalCurve insertion_curve(const model::Classifier& model, const imaging::NormalizationStats& stats,
                          const imaging::ImageTensor& image, const Grid& map, int class_index, int steps,
                          double sigma) {
    return replay(model, stats, imaging::gaussian_blur(image, sigma), image, map, class_index, steps);
}

// --- pointing game -------------------------------------------------------------

AnnotationParseError::AnnotationParseError(int line, const std::string& what)
    : std::runtime_error("annotations line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

int field_int(const std::string& s, int line, const char* name) {
    try {
        std::size_t used = 0;
        const long v = std::stol(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw AnnotationParseError(line, std::string("field ") + name + " is not an integer: '" + s + "'");
    }
}

} // namespace

std::vector<BBox> parse_annotations(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    bool header = false;
    std::vector<BBox> boxes;
    while (std::getline(in, raw)) {
        ++line;
        const std::string body = trim(raw);
        if (body.empty()) continue;
        if (!header) {
            std::string compact;
            for (char ch : body)
                if (ch != ' ' && ch != '\t') compact += ch;
            if (compact != kAnnotationHeader)
                throw AnnotationParseError(line, "expected header '" + std::string(kAnnotationHeader) + "'");
            header = true;
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(body);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(trim(f));
        if (!body.empty() && body.back() == ',') fields.emplace_back();
        if (fields.size() != 6)
            throw AnnotationParseError(line, "expected 6 fields, found " + std::to_string(fields.size()));
        BBox b;
        b.image_id = fields[0];
        if (b.image_id.empty()) throw AnnotationParseError(line, "empty image_id");
        b.class_label = field_int(fields[1], line, "class_label");
        b.x0 = field_int(fields[2], line, "x0");
        b.y0 = field_int(fields[3], line, "y0");
        b.x1 = field_int(fields[4], line, "x1");
        b.y1 = field_int(fields[5], line, "y1");
        if (b.class_label < 0) throw AnnotationParseError(line, "negative class_label");
        if (b.x0 < 0 || b.y0 < 0 || b.x0 >= b.x1 || b.y0 >= b.y1)
            throw AnnotationParseError(line, "box must satisfy 0 <= x0 < x1 and 0 <= y0 < y1");
        boxes.push_back(std::move(b));
    }
    if (!header) throw AnnotationParseError(line == 0 ? 1 : line, "missing header line");
    return boxes;
}

std::vector<BBox> load_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open annotations file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_annotations(ss.str());
}

PixelPos argmax_pixel(const Grid& map) {
    if (map.size() == 0) throw std::invalid_argument("argmax_pixel: empty map");
    const auto it = std::max_element(map.values.begin(), map.values.end());
    const auto p = static_cast<std::size_t>(it - map.values.begin());
    return {static_cast<int>(p / map.width), static_cast<int>(p % map.width)};
}

bool pointing_hit(const PointingRecord& record) {
    if (record.boxes.empty()) throw std::invalid_argument("pointing: record has no boxes");
    const int sh = record.source_height > 0 ? record.source_height : record.map.height;
    const int sw = record.source_width > 0 ? record.source_width : record.map.width;
    for (const auto& b : record.boxes)
        if (b.x1 > sw || b.y1 > sh)
            throw std::invalid_argument("pointing: box for '" + b.image_id + "' exceeds the " + std::to_string(sw) +
                                        "x" + std::to_string(sh) + " image");
    const auto pos = argmax_pixel(record.map);
    const double x = (pos.col + 0.5) * sw / record.map.width;
    const double y = (pos.row + 0.5) * sh / record.map.height;
    return std::any_of(record.boxes.begin(), record.boxes.end(),
                       [&](const BBox& b) { return x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1; });
}

PointingResult pointing_game(const std::vector<PointingRecord>& records) {
    if (records.empty()) throw std::invalid_argument("pointing_game: no records");
    PointingResult r;
    for (const auto& rec : records) (pointing_hit(rec) ? r.hits : r.misses)++;
    r.accuracy = static_cast<double>(r.hits) / (r.hits + r.misses);
    return r;
}

// --- sanity check --------------------------------------------------------------

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(const Grid& a, const Grid& b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman: maps differ in size");
    const auto ra = average_ranks(a.values);
    const auto rb = average_ranks(b.values);
    const double n = static_cast<double>(ra.size());
    if (n == 0) return 0.0;
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

std::vector<SanityRow> sanity_check(const model::Classifier& model, const imaging::ImageTensor& image,
                                    const imaging::NormalizedInput& input, const model::LayerRef& layer,
                                    int class_index, const std::string& method_id, model::RandomizationMode mode,
                                    const std::vector<std::uint64_t>& seeds, const cam::MethodParams& params) {
    if (seeds.empty()) throw std::invalid_argument("sanity_check: at least one seed is required");
    if (!cam::has_method(method_id)) throw std::invalid_argument("sanity_check: unknown method '" + method_id + "'");
    const auto original = cam::run_method(method_id, {model, image, input, layer, class_index, params});
    std::vector<SanityRow> rows;
    for (const auto& target : model::parameterized_layers_top_down(model)) {
        SanityRow row{target.name, 0.0, {}};
        for (const auto seed : seeds) {
            const auto randomized = model::randomize_layers(model, mode, target, seed);
            const auto map = cam::run_method(method_id, {randomized, image, input, layer, class_index, params});
            row.per_seed.push_back(spearman(original.values, map.values));
        }
        row.mean_similarity =
            std::accumulate(row.per_seed.begin(), row.per_seed.end(), 0.0) / static_cast<double>(row.per_seed.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

double non_increasing_fraction(const std::vector<SanityRow>& rows) {
    if (rows.size() < 2) return 1.0;
    int ok = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].mean_similarity <= rows[i - 1].mean_similarity) ++ok;
    return static_cast<double>(ok) / static_cast<double>(rows.size() - 1);
}

} // namespace abscam::eval
