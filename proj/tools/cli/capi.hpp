#pragma once

// Thin RAII layer over the C API for the command-line front end.

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "abscam/abscam.h"

namespace abscam::cli {

struct ApiError : std::runtime_error {
    ApiError(abscam_status s, const std::string& what) : std::runtime_error(what), status(s) {}
    abscam_status status;
};

inline void check(abscam_status s) {
    if (s != ABSCAM_OK) throw ApiError(s, abscam_last_error());
}

struct ModelDeleter {
    void operator()(abscam_model* p) const { abscam_model_destroy(p); }
};
struct ImageDeleter {
    void operator()(abscam_image* p) const { abscam_image_destroy(p); }
};
struct MapDeleter {
    void operator()(abscam_map* p) const { abscam_map_destroy(p); }
};
struct AnnotationsDeleter {
    void operator()(abscam_annotations* p) const { abscam_annotations_destroy(p); }
};
struct SanityDeleter {
    void operator()(abscam_sanity* p) const { abscam_sanity_destroy(p); }
};

using Model = std::unique_ptr<abscam_model, ModelDeleter>;
using Image = std::unique_ptr<abscam_image, ImageDeleter>;
using Map = std::unique_ptr<abscam_map, MapDeleter>;
using Annotations = std::unique_ptr<abscam_annotations, AnnotationsDeleter>;
using Sanity = std::unique_ptr<abscam_sanity, SanityDeleter>;

inline Model load_model(const std::string& spec) {
    abscam_model* m = nullptr;
    check(abscam_model_load(spec.c_str(), &m));
    return Model(m);
}

inline Model clone(const abscam_model* m) {
    abscam_model* out = nullptr;
    check(abscam_model_clone(m, &out));
    return Model(out);
}

inline Image load_image(const std::string& path, int height, int width) {
    abscam_image* img = nullptr;
    check(abscam_image_load(path.c_str(), height, width, &img));
    return Image(img);
}

inline Map explain(const abscam_model* m, const abscam_image* img, const abscam_method_params& p) {
    abscam_map* map = nullptr;
    check(abscam_explain(m, img, &p, &map));
    return Map(map);
}

inline Image overlay(const abscam_image* img, const abscam_map* map, double alpha) {
    abscam_image* out = nullptr;
    check(abscam_overlay(img, map, alpha, &out));
    return Image(out);
}

/// Drains the calling thread's warning records.
inline std::vector<std::string> take_warnings() {
    std::vector<std::string> out;
    for (size_t i = 0; i < abscam_warning_count(); ++i) out.emplace_back(abscam_warning(i));
    abscam_clear_warnings();
    return out;
}

} // namespace abscam::cli
