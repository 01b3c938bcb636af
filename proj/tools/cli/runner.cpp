#include "runner.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include <json.hpp>

#include "capi.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace abscam::cli {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::optional<int> fixed_class(const RunConfig& c) {
    if (c.class_mode == "auto") return std::nullopt;
    return std::stoi(c.class_mode);
}

struct Session {
    Model model;
    std::string layer;
    int input_height = 0;
    int input_width = 0;
};

Session open_session(const RunConfig& config) {
    Session s;
    try {
        s.model = load_model(config.model);
    } catch (const ApiError& e) {
        throw UsageError(std::string("cannot load model: ") + e.what());
    }
    s.layer = config.layer.empty() ? abscam_model_default_layer(s.model.get()) : config.layer;
    bool known = false;
    for (size_t i = 0; i < abscam_model_layer_count(s.model.get()); ++i)
        known = known || s.layer == abscam_model_layer_name(s.model.get(), i);
    if (!known) throw UsageError("model '" + config.model + "' has no layer '" + s.layer + "'");
    if (auto cls = fixed_class(config); cls && *cls >= abscam_model_num_classes(s.model.get()))
        throw UsageError("--class " + std::to_string(*cls) + " is out of range for " +
                         std::to_string(abscam_model_num_classes(s.model.get())) + " classes");
    abscam_model_input_size(s.model.get(), &s.input_height, &s.input_width);
    return s;
}

void prepare_out(const RunConfig& config) {
    std::error_code ec;
    fs::create_directories(config.out, ec);
    if (ec || !fs::is_directory(config.out)) throw UsageError("cannot create output directory '" + config.out + "'");
}

struct ImageEntry {
    std::string id;
    fs::path path;
    std::string duplicate_of;
};

std::vector<ImageEntry> discover(const RunConfig& config) {
    std::vector<ImageEntry> out;
    std::map<std::string, std::string> seen;
    for (const auto& p : list_images(config.images)) {
        ImageEntry e{p.stem().string(), p, {}};
        auto [it, fresh] = seen.emplace(e.id, p.filename().string());
        if (!fresh) e.duplicate_of = it->second;
        out.push_back(std::move(e));
    }
    return out;
}

/// Runs fn(index, model) over n items with one model clone per worker.
template <class Fn>
void for_each_item(size_t n, int workers, const abscam_model* base, Fn&& fn) {
    const size_t count = std::min<size_t>(std::max(1, workers), std::max<size_t>(n, 1));
    std::vector<Model> clones;
    for (size_t w = 0; w < count; ++w) clones.push_back(clone(base));
    std::atomic<size_t> next{0};
    auto body = [&](const abscam_model* m) {
        abscam_clear_warnings();
        for (size_t i; (i = next++) < n;) fn(i, m);
    };
    if (count == 1) {
        body(clones[0].get());
        return;
    }
    std::vector<std::thread> threads;
    for (size_t w = 0; w < count; ++w) threads.emplace_back(body, clones[w].get());
    for (auto& t : threads) t.join();
}

abscam_method_params method_params(const RunConfig& c, const Session& s, const std::string& method, int cls) {
    abscam_method_params p;
    abscam_method_params_init(&p);
    p.method = method.c_str();
    p.layer = s.layer.c_str();
    p.class_index = cls;
    p.workers = 1;
    p.sg_samples = c.sg_samples;
    p.sg_noise = c.sg_noise;
    p.seed = c.seeds.front();
    return p;
}

int resolve_class(const RunConfig& c, const abscam_model* m, const abscam_image* img) {
    if (auto cls = fixed_class(c)) return *cls;
    int out = 0;
    check(abscam_predicted_class(m, img, &out));
    return out;
}

json config_echo(const RunConfig& c, const Session& s) {
    return {{"model", c.model},
            {"model_id", abscam_model_id(s.model.get())},
            {"model_checksum", abscam_model_checksum(s.model.get())},
            {"input_size", {s.input_height, s.input_width}},
            {"layer", s.layer},
            {"methods", c.methods},
            {"class", c.class_mode},
            {"images", c.images},
            {"annotations", c.annotations},
            {"steps", c.steps},
            {"mask_fraction", c.mask_fraction},
            {"baseline", c.baseline},
            {"sigma", c.sigma},
            {"seeds", c.seeds},
            {"sg_samples", c.sg_samples},
            {"sg_noise", c.sg_noise}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string artifact_stem(const std::string& id, const std::string& method, int cls) {
    return id + "." + method + ".c" + std::to_string(cls);
}

int finish(const std::string& command, size_t total, size_t failed) {
    if (total == 0) {
        std::cerr << command << ": no images found (expected .png, .jpg or .jpeg files)\n";
        return kExitFailure;
    }
    if (failed == total) {
        std::cerr << command << ": every image failed; see the output directory for details\n";
        return kExitFailure;
    }
    if (failed > 0) std::cerr << command << ": " << failed << " of " << total << " images failed\n";
    return kExitSuccess;
}

} // namespace

void validate(const RunConfig& c) {
    if (c.methods.empty()) throw UsageError("at least one --method is required");
    for (const auto& m : c.methods)
        if (!abscam_has_method(m.c_str())) throw UsageError("unknown method '" + m + "'");
    std::set<std::string> unique(c.methods.begin(), c.methods.end());
    if (unique.size() != c.methods.size()) throw UsageError("--method values must be distinct");
    if (c.class_mode != "auto") {
        size_t used = 0;
        int v = -1;
        try {
            v = std::stoi(c.class_mode, &used);
        } catch (const std::exception&) {
        }
        if (used != c.class_mode.size() || v < 0) throw UsageError("--class must be 'auto' or a class index");
    }
    if (c.steps < 1) throw UsageError("--steps must be at least 1");
    if (!(c.mask_fraction > 0.0 && c.mask_fraction <= 1.0)) throw UsageError("--mask-fraction must lie in (0, 1]");
    if (c.baseline != "zeros" && c.baseline != "blur") throw UsageError("--baseline must be 'zeros' or 'blur'");
    if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) throw UsageError("--sigma must be positive");
    if (c.seeds.empty()) throw UsageError("at least one --seed is required");
    if (c.workers < 1) throw UsageError("--workers must be at least 1");
    if (c.sg_samples < 1) throw UsageError("--sg-samples must be at least 1");
    if (!(c.sg_noise >= 0.0)) throw UsageError("--sg-noise must be non-negative");
    if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw UsageError("--alpha must lie in [0, 1]");
    if (c.images.empty()) throw UsageError("--images is required");
    if (!fs::is_directory(c.images)) throw UsageError("--images '" + c.images + "' is not a directory");
    if (c.out.empty()) throw UsageError("--out must not be empty");
}

std::vector<fs::path> list_images(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto ext = lower(e.path().extension().string());
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    return out;
}

// ---- explain ---------------------------------------------------------------

int cmd_explain(const RunConfig& c) {
    validate(c);
    const auto session = open_session(c);
    prepare_out(c);
    const auto images = discover(c);
    std::vector<json> entries(images.size());
    std::mutex writer;

    for_each_item(images.size(), c.workers, session.model.get(), [&](size_t i, const abscam_model* m) {
        const auto& im = images[i];
        json entry{{"image_id", im.id}, {"file", im.path.filename().string()}};
        try {
            if (!im.duplicate_of.empty()) throw std::runtime_error("duplicate image id (also used by " + im.duplicate_of + ")");
            auto img = load_image(im.path.string(), session.input_height, session.input_width);
            const int cls = resolve_class(c, m, img.get());
            std::vector<std::pair<std::string, Map>> maps;
            for (const auto& method : c.methods)
                maps.emplace_back(method, explain(m, img.get(), method_params(c, session, method, cls)));
            json artifacts = json::array();
            std::lock_guard lock(writer);
            for (const auto& [method, map] : maps) {
                const auto stem = artifact_stem(im.id, method, cls);
                const auto over = overlay(img.get(), map.get(), c.alpha);
                check(abscam_image_save_png(over.get(), (fs::path(c.out) / (stem + ".png")).c_str()));
                check(abscam_map_save_csv(map.get(), (fs::path(c.out) / (stem + ".csv")).c_str()));
                check(abscam_map_save_binary(map.get(), (fs::path(c.out) / (stem + ".bin")).c_str()));
                artifacts.push_back(
                    {{"method", method}, {"overlay", stem + ".png"}, {"heatmap_csv", stem + ".csv"}, {"heatmap_binary", stem + ".bin"}});
            }
            entry["status"] = "ok";
            entry["class"] = cls;
            entry["source_size"] = {abscam_image_source_height(img.get()), abscam_image_source_width(img.get())};
            entry["artifacts"] = std::move(artifacts);
        } catch (const std::exception& e) {
            entry["status"] = "failed";
            entry["error"] = e.what();
        }
        entry["warnings"] = take_warnings();
        entries[i] = std::move(entry);
    });

    size_t failed = 0;
    for (const auto& e : entries) failed += e["status"] == "failed";
    auto config = config_echo(c, session);
    config["alpha"] = c.alpha;
    write_json(fs::path(c.out) / "manifest.json", {{"schema_version", kSchemaVersion},
                                                   {"command", "explain"},
                                                   {"config", config},
                                                   {"n_images", images.size()},
                                                   {"n_failed", failed},
                                                   {"entries", entries}});
    return finish("explain", images.size(), failed);
}

// ---- evaluate --------------------------------------------------------------

namespace {

struct Row {
    std::string method;
    int cls = 0;
    abscam_drop_case drop{};
    double deletion = 0;
    double insertion = 0;
    std::optional<int> hit;
    double seconds = 0;
};

struct ImageRows {
    std::vector<Row> rows;
    std::string error;
    std::vector<std::string> warnings;
};

std::map<std::pair<std::string, int>, std::vector<abscam_bbox>> boxes_by_image(const abscam_annotations* ann) {
    std::map<std::pair<std::string, int>, std::vector<abscam_bbox>> out;
    for (size_t i = 0; i < abscam_annotations_count(ann); ++i) {
        abscam_bbox b;
        check(abscam_annotations_get(ann, i, &b));
        out[{b.image_id, b.class_label}].push_back(b);
    }
    return out;
}

Annotations load_annotations(const std::string& path) {
    abscam_annotations* a = nullptr;
    try {
        check(abscam_annotations_load(path.c_str(), &a));
    } catch (const ApiError& e) {
        throw UsageError(e.what());
    }
    return Annotations(a);
}

double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

json mean_or_null(const std::vector<double>& v) { return v.empty() ? json(nullptr) : json(mean(v)); }

} // namespace

int cmd_evaluate(const RunConfig& c) {
    validate(c);
    const auto session = open_session(c);
    Annotations ann;
    std::map<std::pair<std::string, int>, std::vector<abscam_bbox>> boxes;
    if (!c.annotations.empty()) {
        ann = load_annotations(c.annotations);
        boxes = boxes_by_image(ann.get());
    }
    prepare_out(c);
    const auto images = discover(c);
    std::vector<ImageRows> results(images.size());

    for_each_item(images.size(), c.workers, session.model.get(), [&](size_t i, const abscam_model* m) {
        auto& out = results[i];
        const auto& im = images[i];
        try {
            if (!im.duplicate_of.empty()) throw std::runtime_error("duplicate image id (also used by " + im.duplicate_of + ")");
            auto img = load_image(im.path.string(), session.input_height, session.input_width);
            const int cls = resolve_class(c, m, img.get());
            for (const auto& method : c.methods) {
                const auto start = std::chrono::steady_clock::now();
                Row row;
                row.method = method;
                row.cls = cls;
                const auto map = explain(m, img.get(), method_params(c, session, method, cls));
                check(abscam_drop_increase(m, img.get(), map.get(), cls, c.mask_fraction, &row.drop));
                check(abscam_deletion_curve(m, img.get(), map.get(), cls, c.steps, c.baseline.c_str(), c.sigma, nullptr,
                                            &row.deletion));
                check(abscam_insertion_curve(m, img.get(), map.get(), cls, c.steps, c.sigma, nullptr, &row.insertion));
                if (auto it = boxes.find({im.id, cls}); it != boxes.end()) {
                    int hit = 0;
                    check(abscam_pointing_hit(map.get(), it->second.data(), it->second.size(),
                                              abscam_image_source_height(img.get()),
                                              abscam_image_source_width(img.get()), &hit));
                    row.hit = hit;
                }
                row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                out.rows.push_back(std::move(row));
            }
        } catch (const std::exception& e) {
            out.rows.clear();
            out.error = e.what();
        }
        out.warnings = take_warnings();
    });

    std::string csv = "schema_version,image_id,method_id,class,drop,increase_flag,deletion_auc,insertion_auc,pointing_hit\n";
    std::string timings = "image_id,method_id,wall_time_seconds\n";
    struct Acc {
        std::vector<double> drop, increase, deletion, insertion, hit;
        size_t rows = 0;
    };
    std::map<std::string, Acc> acc;
    json failures = json::array(), warnings = json::array();
    size_t failed = 0;
    for (size_t i = 0; i < images.size(); ++i) {
        const auto& r = results[i];
        for (const auto& w : r.warnings) warnings.push_back({{"image_id", images[i].id}, {"warning", w}});
        if (!r.error.empty()) {
            ++failed;
            failures.push_back({{"image_id", images[i].id}, {"file", images[i].path.filename().string()}, {"error", r.error}});
            continue;
        }
        for (const auto& row : r.rows) {
            auto& a = acc[row.method];
            ++a.rows;
            const bool excluded = row.drop.excluded != 0;
            const double drop = 100.0 * row.drop.drop;
            csv += std::to_string(kSchemaVersion) + "," + images[i].id + "," + row.method + "," + std::to_string(row.cls) +
                   "," + (excluded ? "" : fmt(drop)) + "," + (excluded ? "" : std::to_string(row.drop.increased)) + "," +
                   fmt(row.deletion) + "," + fmt(row.insertion) + "," + (row.hit ? std::to_string(*row.hit) : "") + "\n";
            timings += images[i].id + "," + row.method + "," + fmt(row.seconds) + "\n";
            if (!excluded) {
                a.drop.push_back(drop);
                a.increase.push_back(100.0 * row.drop.increased);
            }
            a.deletion.push_back(row.deletion);
            a.insertion.push_back(row.insertion);
            if (row.hit) a.hit.push_back(*row.hit);
        }
    }
    write_text(fs::path(c.out) / "results.csv", csv);
    write_text(fs::path(c.out) / "timings.csv", timings);

    json methods = json::object();
    for (const auto& id : c.methods) {
        const auto& a = acc[id];
        json m{{"n_images", a.rows},
               {"n_drop_excluded", a.rows - a.drop.size()},
               {"average_drop", mean_or_null(a.drop)},
               {"average_increase", mean_or_null(a.increase)},
               {"deletion_auc", mean_or_null(a.deletion)},
               {"insertion_auc", mean_or_null(a.insertion)}};
        if (!a.hit.empty()) m["pointing"] = {{"n", a.hit.size()}, {"accuracy", mean(a.hit)}};
        methods[id] = std::move(m);
    }
    std::vector<std::string> ids;
    for (const auto& im : images) ids.push_back(im.id);
    auto config = config_echo(c, session);
    config["image_ids"] = ids;
    write_json(fs::path(c.out) / "summary.json", {{"schema_version", kSchemaVersion},
                                                  {"command", "evaluate"},
                                                  {"config", config},
                                                  {"n_images", images.size()},
                                                  {"n_failed", failed},
                                                  {"methods", methods},
                                                  {"failures", failures},
                                                  {"warnings", warnings}});
    return finish("evaluate", images.size(), failed);
}

// ---- pointing --------------------------------------------------------------

int cmd_pointing(const RunConfig& c) {
    validate(c);
    if (c.annotations.empty()) throw UsageError("pointing requires --annotations");
    const auto session = open_session(c);
    const auto ann = load_annotations(c.annotations);
    const auto boxes = boxes_by_image(ann.get());
    prepare_out(c);

    std::map<std::string, fs::path> by_id;
    for (const auto& im : discover(c))
        if (im.duplicate_of.empty()) by_id.emplace(im.id, im.path);

    struct Job {
        std::string id;
        int cls;
        const std::vector<abscam_bbox>* boxes;
        fs::path path;
    };
    std::vector<Job> jobs;
    std::set<std::string> missing;
    for (const auto& [key, list] : boxes) {
        auto it = by_id.find(key.first);
        if (it == by_id.end()) {
            missing.insert(key.first);
            continue;
        }
        jobs.push_back({key.first, key.second, &list, it->second});
    }
    for (const auto& id : missing) std::cerr << "pointing: warning: annotated image '" << id << "' not found; skipped\n";

    struct Outcome {
        std::vector<int> hits;
        std::string error;
    };
    std::vector<Outcome> outcomes(jobs.size());
    for_each_item(jobs.size(), c.workers, session.model.get(), [&](size_t i, const abscam_model* m) {
        const auto& job = jobs[i];
        try {
            auto img = load_image(job.path.string(), session.input_height, session.input_width);
            if (job.cls >= abscam_model_num_classes(m))
                throw std::runtime_error("class label " + std::to_string(job.cls) + " is out of range for the model");
            for (const auto& method : c.methods) {
                const auto map = explain(m, img.get(), method_params(c, session, method, job.cls));
                int hit = 0;
                check(abscam_pointing_hit(map.get(), job.boxes->data(), job.boxes->size(),
                                          abscam_image_source_height(img.get()), abscam_image_source_width(img.get()),
                                          &hit));
                outcomes[i].hits.push_back(hit);
            }
        } catch (const std::exception& e) {
            outcomes[i].hits.clear();
            outcomes[i].error = e.what();
        }
        take_warnings();
    });

    json methods = json::object(), failures = json::array(), records = json::array();
    std::vector<int> hits(c.methods.size(), 0), total(c.methods.size(), 0);
    size_t failed = 0;
    for (size_t i = 0; i < jobs.size(); ++i) {
        if (!outcomes[i].error.empty()) {
            ++failed;
            failures.push_back({{"image_id", jobs[i].id}, {"class", jobs[i].cls}, {"error", outcomes[i].error}});
            continue;
        }
        json rec{{"image_id", jobs[i].id}, {"class", jobs[i].cls}};
        for (size_t k = 0; k < c.methods.size(); ++k) {
            hits[k] += outcomes[i].hits[k];
            ++total[k];
            rec[c.methods[k]] = outcomes[i].hits[k];
        }
        records.push_back(std::move(rec));
    }
    for (size_t k = 0; k < c.methods.size(); ++k)
        methods[c.methods[k]] = {{"hits", hits[k]},
                                 {"misses", total[k] - hits[k]},
                                 {"accuracy", total[k] ? static_cast<double>(hits[k]) / total[k] : 0.0}};
    write_json(fs::path(c.out) / "pointing.json", {{"schema_version", kSchemaVersion},
                                                   {"command", "pointing"},
                                                   {"config", config_echo(c, session)},
                                                   {"methods", methods},
                                                   {"records", records},
                                                   {"missing_images", missing},
                                                   {"failures", failures}});
    if (jobs.empty()) {
        std::cerr << "pointing: no annotated image was found in '" << c.images << "'\n";
        return kExitFailure;
    }
    return finish("pointing", jobs.size(), failed);
}

// ---- sanity ----------------------------------------------------------------

namespace {

constexpr const char* kModes[] = {"cascade", "independent"};

Image strip(const std::vector<Image>& tiles) {
    const int gap = 2;
    const int h = abscam_image_height(tiles.front().get());
    const int w = abscam_image_width(tiles.front().get());
    const int n = static_cast<int>(tiles.size());
    const int width = n * w + (n - 1) * gap;
    std::vector<double> rgb(static_cast<size_t>(h) * width * 3, 1.0);
    for (int t = 0; t < n; ++t) {
        const double* px = abscam_image_data(tiles[t].get());
        for (int i = 0; i < h; ++i)
            std::copy_n(px + static_cast<size_t>(i) * w * 3, w * 3,
                        rgb.begin() + (static_cast<size_t>(i) * width + t * (w + gap)) * 3);
    }
    abscam_image* out = nullptr;
    check(abscam_image_from_rgb(h, width, rgb.data(), &out));
    return Image(out);
}

void write_strip(const RunConfig& c, const Session& s, const abscam_model* m, const abscam_image* img,
                 const std::string& id, const std::string& method, int cls, const std::vector<std::string>& layers,
                 std::mutex& writer) {
    const auto params = method_params(c, s, method, cls);
    std::vector<Image> tiles;
    tiles.push_back(overlay(img, explain(m, img, params).get(), c.alpha));
    for (const auto& layer : layers) {
        abscam_model* r = nullptr;
        check(abscam_model_randomize(m, "cascade", layer.c_str(), c.seeds.front(), &r));
        Model randomized(r);
        tiles.push_back(overlay(img, explain(r, img, params).get(), c.alpha));
    }
    const auto out = strip(tiles);
    std::lock_guard lock(writer);
    check(abscam_image_save_png(out.get(), (fs::path(c.out) / (artifact_stem(id, method, cls) + ".sanity.png")).c_str()));
}

} // namespace

int cmd_sanity(const RunConfig& c) {
    validate(c);
    const auto session = open_session(c);
    prepare_out(c);
    const auto images = discover(c);

    using Table = std::vector<std::pair<std::string, double>>;
    struct Outcome {
        std::vector<std::array<Table, 2>> tables;  // per method, per mode
        std::string error;
    };
    std::vector<Outcome> outcomes(images.size());
    std::mutex writer;
    for_each_item(images.size(), c.workers, session.model.get(), [&](size_t i, const abscam_model* m) {
        const auto& im = images[i];
        try {
            if (!im.duplicate_of.empty()) throw std::runtime_error("duplicate image id (also used by " + im.duplicate_of + ")");
            auto img = load_image(im.path.string(), session.input_height, session.input_width);
            const int cls = resolve_class(c, m, img.get());
            for (const auto& method : c.methods) {
                std::array<Table, 2> tables;
                const auto params = method_params(c, session, method, cls);
                for (int mode = 0; mode < 2; ++mode) {
                    abscam_sanity* raw = nullptr;
                    check(abscam_sanity_check(m, img.get(), &params, kModes[mode], c.seeds.data(), c.seeds.size(), &raw));
                    Sanity result(raw);
                    for (size_t k = 0; k < abscam_sanity_count(raw); ++k)
                        tables[mode].emplace_back(abscam_sanity_layer(raw, k), abscam_sanity_similarity(raw, k));
                }
                if (c.strip) {
                    std::vector<std::string> layers;
                    for (const auto& row : tables[0]) layers.push_back(row.first);
                    write_strip(c, session, m, img.get(), im.id, method, cls, layers, writer);
                }
                outcomes[i].tables.push_back(std::move(tables));
            }
        } catch (const std::exception& e) {
            outcomes[i].tables.clear();
            outcomes[i].error = e.what();
        }
        take_warnings();
    });

    size_t failed = 0, ok = 0;
    json failures = json::array();
    std::vector<std::array<Table, 2>> sums;
    for (size_t i = 0; i < images.size(); ++i) {
        const auto& o = outcomes[i];
        if (!o.error.empty()) {
            ++failed;
            failures.push_back({{"image_id", images[i].id}, {"error", o.error}});
            continue;
        }
        if (ok++ == 0) {
            sums = o.tables;
            continue;
        }
        for (size_t k = 0; k < sums.size(); ++k)
            for (int mode = 0; mode < 2; ++mode)
                for (size_t r = 0; r < sums[k][mode].size(); ++r) sums[k][mode][r].second += o.tables[k][mode][r].second;
    }

    std::string csv = "schema_version,method_id,mode,layer,mean_similarity,n_images\n";
    json methods = json::object();
    for (size_t k = 0; k < sums.size(); ++k) {
        json entry;
        for (int mode = 0; mode < 2; ++mode) {
            auto& table = sums[k][mode];
            for (auto& row : table) row.second /= static_cast<double>(ok);
            const auto prefix = std::to_string(kSchemaVersion) + "," + c.methods[k] + "," + kModes[mode] + ",";
            csv += prefix + "none," + fmt(1.0) + "," + std::to_string(ok) + "\n";
            json rows = json::array();
            for (const auto& [layer, sim] : table) {
                csv += prefix + layer + "," + fmt(sim) + "," + std::to_string(ok) + "\n";
                rows.push_back({{"layer", layer}, {"mean_similarity", sim}});
            }
            entry[kModes[mode]] = std::move(rows);
        }
        const auto& cascade = sums[k][0];
        size_t non_increasing = 0;
        for (size_t r = 1; r < cascade.size(); ++r) non_increasing += cascade[r].second <= cascade[r - 1].second;
        entry["non_increasing_fraction"] =
            cascade.size() < 2 ? 1.0 : static_cast<double>(non_increasing) / static_cast<double>(cascade.size() - 1);
        entry["full_cascade_similarity"] = cascade.empty() ? 1.0 : cascade.back().second;
        methods[c.methods[k]] = std::move(entry);
    }
    write_text(fs::path(c.out) / "sanity.csv", csv);
    auto config = config_echo(c, session);
    config["strip"] = c.strip;
    write_json(fs::path(c.out) / "sanity.json", {{"schema_version", kSchemaVersion},
                                                 {"command", "sanity"},
                                                 {"config", config},
                                                 {"n_images", images.size()},
                                                 {"n_failed", failed},
                                                 {"methods", methods},
                                                 {"failures", failures}});
    return finish("sanity", images.size(), failed);
}

} // namespace abscam::cli
