#include "abscam/abscam.h"

#include <charconv>
#include <cstring>
#include <string>
#include <vector>

#include "abscam/cam.hpp"
#include "abscam/eval.hpp"
#include "abscam/imaging.hpp"
#include "abscam/model.hpp"

using namespace abscam;

struct abscam_model {
    model::Classifier net;
    model::ModelProfile profile;
    std::string default_layer;
    std::vector<std::string> layer_names;
};

struct abscam_image {
    imaging::ImageTensor pixels;
    int source_height = 0;
    int source_width = 0;
};

struct abscam_map {
    cam::SaliencyMap map;
};

struct abscam_annotations {
    std::vector<eval::BBox> boxes;
};

struct abscam_sanity {
    std::vector<eval::SanityRow> rows;
};

namespace {

thread_local std::string last_error;
thread_local std::vector<std::string> warnings;

abscam_status fail(abscam_status status, std::string message) {
    last_error = std::move(message);
    return status;
}

template <typename F>
abscam_status guarded(F&& body) {
    try {
        body();
        last_error.clear();
        return ABSCAM_OK;
    } catch (const eval::AnnotationParseError& e) {
        return fail(ABSCAM_ERR_PARSE, e.what());
    } catch (const IngestionError& e) {
        return fail(ABSCAM_ERR_IO, e.what());
    } catch (const AdapterError& e) {
        return fail(ABSCAM_ERR_ADAPTER, e.what());
    } catch (const NumericError& e) {
        return fail(ABSCAM_ERR_NUMERIC, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(ABSCAM_ERR_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(ABSCAM_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(ABSCAM_ERR_INTERNAL, "unknown error");
    }
}

template <typename... P>
void require(const P*... ptrs) {
    if (((ptrs == nullptr) || ...)) throw std::invalid_argument("null argument");
}

abscam_model* wrap(model::Classifier net, model::ModelProfile profile) {
    auto* m = new abscam_model{std::move(net), std::move(profile), {}, {}};
    m->default_layer = m->profile.target_layer.empty() ? m->net.default_target_layer().name : m->profile.target_layer;
    m->net.layer(m->default_layer);
    m->layer_names = m->net.layer_names();
    return m;
}

imaging::NormalizedInput model_input(const abscam_model* m, const abscam_image* img) {
    return imaging::normalize(img->pixels, m->profile.stats);
}

model::LayerRef resolve_layer(const abscam_model* m, const char* layer) {
    return m->net.layer(layer && *layer ? layer : m->default_layer);
}

void check_map(const abscam_image* img, const abscam_map* map) {
    if (map->map.values.height != img->pixels.height() || map->map.values.width != img->pixels.width())
        throw std::invalid_argument("map dimensions differ from image");
}

model::ModelProfile profile_for(const std::string& spec) {
    const std::string builtin = "reference-cnn";
    if (spec == builtin) return model::reference_profile(0);
    if (spec.rfind(builtin + ":", 0) == 0) {
        const std::string digits = spec.substr(builtin.size() + 1);
        std::uint64_t seed = 0;
        const auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
        if (ec != std::errc{} || p != digits.data() + digits.size() || digits.empty())
            throw std::invalid_argument("bad reference seed in model spec '" + spec + "'");
        return model::reference_profile(seed);
    }
    return model::load_profile(spec);
}

} // namespace

extern "C" {

const char* abscam_version(void) { return "0.1.0"; }

const char* abscam_last_error(void) { return last_error.c_str(); }

const char* abscam_status_name(abscam_status status) {
    switch (status) {
    case ABSCAM_OK: return "ok";
    case ABSCAM_ERR_ARGUMENT: return "argument error";
    case ABSCAM_ERR_IO: return "ingestion error";
    case ABSCAM_ERR_ADAPTER: return "adapter error";
    case ABSCAM_ERR_NUMERIC: return "numeric error";
    case ABSCAM_ERR_PARSE: return "parse error";
    case ABSCAM_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

size_t abscam_warning_count(void) { return warnings.size(); }

const char* abscam_warning(size_t index) { return index < warnings.size() ? warnings[index].c_str() : nullptr; }

void abscam_clear_warnings(void) { warnings.clear(); }

// --- models --------------------------------------------------------------------

abscam_status abscam_model_load(const char* spec, abscam_model** out) {
    return guarded([&] {
        require(spec, out);
        auto profile = profile_for(spec);
        auto net = model::instantiate(profile);
        *out = wrap(std::move(net), std::move(profile));
    });
}

abscam_status abscam_model_create_reference(uint64_t seed, abscam_model** out) {
    return guarded([&] {
        require(out);
        *out = wrap(model::build_reference_cnn(seed), model::reference_profile(seed));
    });
}

abscam_status abscam_model_clone(const abscam_model* m, abscam_model** out) {
    return guarded([&] {
        require(m, out);
        *out = new abscam_model(*m);
    });
}

void abscam_model_destroy(abscam_model* m) { delete m; }

const char* abscam_model_id(const abscam_model* m) { return m ? m->net.model_id().c_str() : nullptr; }

int abscam_model_num_classes(const abscam_model* m) { return m ? m->net.num_classes() : 0; }

size_t abscam_model_layer_count(const abscam_model* m) { return m ? m->layer_names.size() : 0; }

const char* abscam_model_layer_name(const abscam_model* m, size_t index) {
    return m && index < m->layer_names.size() ? m->layer_names[index].c_str() : nullptr;
}

const char* abscam_model_default_layer(const abscam_model* m) { return m ? m->default_layer.c_str() : nullptr; }

void abscam_model_input_size(const abscam_model* m, int* height, int* width) {
    if (!m) return;
    if (height) *height = m->profile.input_height;
    if (width) *width = m->profile.input_width;
}

uint64_t abscam_model_checksum(const abscam_model* m) { return m ? model::parameter_checksum(m->net) : 0; }

abscam_status abscam_model_randomize(const abscam_model* m, const char* mode, const char* layer, uint64_t seed,
                                     abscam_model** out) {
    return guarded([&] {
        require(m, mode, layer, out);
        const auto parsed = model::parse_randomization_mode(mode);
        if (!parsed) throw std::invalid_argument(std::string("unknown randomization mode '") + mode + "'");
        auto net = model::randomize_layers(m->net, *parsed, m->net.layer(layer), seed, &warnings);
        auto* copy = new abscam_model(*m);
        copy->net = std::move(net);
        *out = copy;
    });
}

abscam_status abscam_model_save_weights(const abscam_model* m, const char* path) {
    return guarded([&] {
        require(m, path);
        model::save_weights(m->net, path);
    });
}

abscam_status abscam_model_predict(const abscam_model* m, const abscam_image* img, double* probs) {
    return guarded([&] {
        require(m, img, probs);
        const auto s = model::forward(m->net, model_input(m, img));
        std::copy(s.probs.begin(), s.probs.end(), probs);
    });
}

abscam_status abscam_predicted_class(const abscam_model* m, const abscam_image* img, int* out) {
    return guarded([&] {
        require(m, img, out);
        *out = cam::predicted_class(m->net, model_input(m, img));
    });
}

// --- images --------------------------------------------------------------------

abscam_status abscam_image_load(const char* path, int height, int width, abscam_image** out) {
    return guarded([&] {
        require(path, out);
        if (height <= 0 || width <= 0) throw std::invalid_argument("target size must be positive");
        auto raw = imaging::load_image(path, &warnings);
        const int sh = raw.height(), sw = raw.width();
        auto pixels = (sh == height && sw == width) ? std::move(raw) : imaging::resize_bilinear(raw, height, width);
        *out = new abscam_image{std::move(pixels), sh, sw};
    });
}

abscam_status abscam_image_from_rgb(int height, int width, const double* rgb, abscam_image** out) {
    return guarded([&] {
        require(rgb, out);
        if (height <= 0 || width <= 0) throw std::invalid_argument("image size must be positive");
        std::vector<double> px(rgb, rgb + static_cast<std::size_t>(height) * width * 3);
        *out = new abscam_image{imaging::ImageTensor(height, width, std::move(px)), height, width};
    });
}

void abscam_image_destroy(abscam_image* img) { delete img; }

int abscam_image_height(const abscam_image* img) { return img ? img->pixels.height() : 0; }

int abscam_image_width(const abscam_image* img) { return img ? img->pixels.width() : 0; }

int abscam_image_source_height(const abscam_image* img) { return img ? img->source_height : 0; }

int abscam_image_source_width(const abscam_image* img) { return img ? img->source_width : 0; }

const double* abscam_image_data(const abscam_image* img) { return img ? img->pixels.pixels().data() : nullptr; }

abscam_status abscam_image_save_png(const abscam_image* img, const char* path) {
    return guarded([&] {
        require(img, path);
        imaging::save_png(img->pixels, path);
    });
}

// --- maps ----------------------------------------------------------------------

void abscam_method_params_init(abscam_method_params* p) {
    if (!p) return;
    const cam::MethodParams defaults;
    p->method = "abs-cam";
    p->layer = nullptr;
    p->class_index = -1;
    p->workers = defaults.workers;
    p->sg_samples = defaults.sg_samples;
    p->sg_noise = defaults.sg_noise;
    p->seed = defaults.seed;
}

abscam_status abscam_explain(const abscam_model* m, const abscam_image* img, const abscam_method_params* p,
                             abscam_map** out) {
    return guarded([&] {
        require(m, img, p, out);
        require(p->method);
        const auto input = model_input(m, img);
        const auto layer = resolve_layer(m, p->layer);
        const int cls = p->class_index < 0 ? cam::predicted_class(m->net, input) : p->class_index;
        if (cls >= m->net.num_classes())
            throw std::invalid_argument("class " + std::to_string(cls) + " out of range for model " + m->net.model_id());
        cam::MethodParams params;
        params.workers = std::max(1, p->workers);
        params.sg_samples = p->sg_samples;
        params.sg_noise = p->sg_noise;
        params.seed = p->seed;
        auto map = cam::run_method(p->method, {m->net, img->pixels, input, layer, cls, params});
        *out = new abscam_map{std::move(map)};
    });
}

abscam_status abscam_map_create(int height, int width, const double* values, abscam_map** out) {
    return guarded([&] {
        require(values, out);
        if (height <= 0 || width <= 0) throw std::invalid_argument("map size must be positive");
        Grid g(height, width);
        std::copy(values, values + g.size(), g.values.begin());
        *out = new abscam_map{{std::move(g), 0, "external"}};
    });
}

void abscam_map_destroy(abscam_map* map) { delete map; }

int abscam_map_height(const abscam_map* map) { return map ? map->map.values.height : 0; }

int abscam_map_width(const abscam_map* map) { return map ? map->map.values.width : 0; }

int abscam_map_class(const abscam_map* map) { return map ? map->map.class_index : -1; }

const char* abscam_map_method(const abscam_map* map) { return map ? map->map.method_id.c_str() : nullptr; }

const double* abscam_map_data(const abscam_map* map) { return map ? map->map.values.values.data() : nullptr; }

abscam_status abscam_map_argmax(const abscam_map* map, int* row, int* col) {
    return guarded([&] {
        require(map, row, col);
        const auto pos = eval::argmax_pixel(map->map.values);
        *row = pos.row;
        *col = pos.col;
    });
}

abscam_status abscam_map_save_csv(const abscam_map* map, const char* path) {
    return guarded([&] {
        require(map, path);
        imaging::save_map_csv(map->map.values, path);
    });
}

abscam_status abscam_map_save_binary(const abscam_map* map, const char* path) {
    return guarded([&] {
        require(map, path);
        imaging::save_map_binary(map->map.values, path);
    });
}

abscam_status abscam_overlay(const abscam_image* img, const abscam_map* map, double alpha, abscam_image** out) {
    return guarded([&] {
        require(img, map, out);
        auto blended = imaging::overlay(img->pixels, map->map.values, alpha);
        *out = new abscam_image{std::move(blended), img->source_height, img->source_width};
    });
}

abscam_status abscam_register_method(const char* id, abscam_method_fn fn, void* user) {
    return guarded([&] {
        require(id);
        if (!fn) throw std::invalid_argument("null method callback");
        const std::string name = id;
        cam::register_method(name, [name, fn, user](const cam::MethodRequest& r) {
            abscam_model handle{r.model, {}, r.layer.name, {}};
            abscam_image image{r.image, r.image.height(), r.image.width()};
            const abscam_method_context ctx{&handle, &image, r.layer.name.c_str(), r.class_index,
                                            r.image.height(), r.image.width()};
            Grid g(r.image.height(), r.image.width());
            if (fn(&ctx, g.values.data(), user) != 0)
                throw std::runtime_error("custom method '" + name + "' reported failure");
            return cam::SaliencyMap{std::move(g), r.class_index, name};
        });
    });
}

int abscam_has_method(const char* id) { return id && cam::has_method(id) ? 1 : 0; }

size_t abscam_method_count(void) { return cam::method_ids().size(); }

abscam_status abscam_method_id(size_t index, char* buf, size_t size) {
    return guarded([&] {
        require(buf);
        const auto ids = cam::method_ids();
        if (index >= ids.size()) throw std::invalid_argument("method index out of range");
        if (size == 0) throw std::invalid_argument("buffer size is zero");
        const std::size_t n = std::min(size - 1, ids[index].size());
        std::memcpy(buf, ids[index].data(), n);
        buf[n] = '\0';
    });
}

// --- metrics -------------------------------------------------------------------

abscam_status abscam_drop_increase(const abscam_model* m, const abscam_image* img, const abscam_map* map,
                                   int class_index, double mask_fraction, abscam_drop_case* out) {
    return guarded([&] {
        require(m, img, map, out);
        check_map(img, map);
        const auto c = eval::drop_increase_case(m->net, m->profile.stats, img->pixels, map->map.values, class_index,
                                                mask_fraction);
        if (c.excluded) warnings.push_back("case excluded: original class probability is 0");
        *out = {c.p_original, c.p_masked, c.drop, c.increased ? 1 : 0, c.excluded ? 1 : 0};
    });
}

abscam_status abscam_deletion_curve(const abscam_model* m, const abscam_image* img, const abscam_map* map,
                                    int class_index, int steps, const char* baseline, double sigma, double* probs,
                                    double* auc) {
    return guarded([&] {
        require(m, img, map, baseline, auc);
        check_map(img, map);
        const auto b = eval::parse_baseline(baseline);
        if (!b) throw std::invalid_argument(std::string("unknown baseline '") + baseline + "'");
        const auto curve = eval::deletion_curve(m->net, m->profile.stats, img->pixels, map->map.values, class_index,
                                                steps, *b, sigma);
        if (probs)
            for (std::size_t i = 0; i < curve.points.size(); ++i) probs[i] = curve.points[i].prob;
        *auc = curve.auc;
    });
}

abscam_status abscam_insertion_curve(const abscam_model* m, const abscam_image* img, const abscam_map* map,
                                     int class_index, int steps, double sigma, double* probs, double* auc) {
    return guarded([&] {
        require(m, img, map, auc);
        check_map(img, map);
        const auto curve =
            eval::insertion_curve(m->net, m->profile.stats, img->pixels, map->map.values, class_index, steps, sigma);
        if (probs)
            for (std::size_t i = 0; i < curve.points.size(); ++i) probs[i] = curve.points[i].prob;
        *auc = curve.auc;
    });
}

abscam_status abscam_annotations_load(const char* path, abscam_annotations** out) {
    return guarded([&] {
        require(path, out);
        *out = new abscam_annotations{eval::load_annotations(path)};
    });
}

abscam_status abscam_annotations_parse(const char* text, abscam_annotations** out) {
    return guarded([&] {
        require(text, out);
        *out = new abscam_annotations{eval::parse_annotations(text)};
    });
}

void abscam_annotations_destroy(abscam_annotations* a) { delete a; }

size_t abscam_annotations_count(const abscam_annotations* a) { return a ? a->boxes.size() : 0; }

abscam_status abscam_annotations_get(const abscam_annotations* a, size_t index, abscam_bbox* out) {
    return guarded([&] {
        require(a, out);
        if (index >= a->boxes.size()) throw std::invalid_argument("annotation index out of range");
        const auto& b = a->boxes[index];
        *out = {b.image_id.c_str(), b.class_label, b.x0, b.y0, b.x1, b.y1};
    });
}

abscam_status abscam_pointing_hit(const abscam_map* map, const abscam_bbox* boxes, size_t count, int source_height,
                                  int source_width, int* hit) {
    return guarded([&] {
        require(map, boxes, hit);
        eval::PointingRecord rec{map->map.values, {}, source_height, source_width};
        for (std::size_t i = 0; i < count; ++i) {
            const auto& b = boxes[i];
            rec.boxes.push_back({b.image_id ? b.image_id : "", b.class_label, b.x0, b.y0, b.x1, b.y1});
        }
        *hit = eval::pointing_hit(rec) ? 1 : 0;
    });
}

abscam_status abscam_spearman(const abscam_map* a, const abscam_map* b, double* out) {
    return guarded([&] {
        require(a, b, out);
        *out = eval::spearman(a->map.values, b->map.values);
    });
}

abscam_status abscam_sanity_check(const abscam_model* m, const abscam_image* img, const abscam_method_params* p,
                                  const char* mode, const uint64_t* seeds, size_t seed_count, abscam_sanity** out) {
    return guarded([&] {
        require(m, img, p, mode, out);
        require(p->method);
        if (seed_count > 0) require(seeds);
        const auto parsed = model::parse_randomization_mode(mode);
        if (!parsed) throw std::invalid_argument(std::string("unknown randomization mode '") + mode + "'");
        const auto input = model_input(m, img);
        const auto layer = resolve_layer(m, p->layer);
        const int cls = p->class_index < 0 ? cam::predicted_class(m->net, input) : p->class_index;
        cam::MethodParams params;
        params.workers = std::max(1, p->workers);
        params.sg_samples = p->sg_samples;
        params.sg_noise = p->sg_noise;
        params.seed = p->seed;
        std::vector<std::uint64_t> s(seeds, seeds + seed_count);
        *out = new abscam_sanity{
            eval::sanity_check(m->net, img->pixels, input, layer, cls, p->method, *parsed, s, params)};
    });
}

void abscam_sanity_destroy(abscam_sanity* s) { delete s; }

size_t abscam_sanity_count(const abscam_sanity* s) { return s ? s->rows.size() : 0; }

const char* abscam_sanity_layer(const abscam_sanity* s, size_t index) {
    return s && index < s->rows.size() ? s->rows[index].layer.c_str() : nullptr;
}

double abscam_sanity_similarity(const abscam_sanity* s, size_t index) {
    return s && index < s->rows.size() ? s->rows[index].mean_similarity : 0.0;
}

} // extern "C"
