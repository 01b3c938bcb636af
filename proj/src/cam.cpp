#include "abscam/cam.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

namespace abscam::cam {

Grid normalize(const Grid& map, std::string_view stage) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (double v : map.values) {
        if (!std::isfinite(v)) throw NumericError("non-finite value at stage '" + std::string(stage) + "'");
        if (first) {
            lo = hi = v;
            first = false;
        } else {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    Grid out(map.height, map.width);
    if (!(hi > lo)) return out;
    const double span = hi - lo;
    for (std::size_t n = 0; n < map.size(); ++n) out.values[n] = (map.values[n] - lo) / span;
    return out;
}

Grid upsample(const Grid& map, int height, int width) {
    if (map.height < 1 || map.width < 1) throw std::invalid_argument("upsample: source map is empty");
    if (height < 1 || width < 1) throw std::invalid_argument("upsample: target size must be positive");
    return imaging::resize_bilinear(map, height, width);
}

namespace {

ChannelWeights pooled(const model::GradStack& grads, bool absolute) {
    const auto& g = grads.grads;
    ChannelWeights out{std::vector<double>(g.channels, 0.0), grads.target_class};
    const double z = static_cast<double>(g.plane());
    for (int k = 0; k < g.channels; ++k) {
        double acc = 0.0;
        for (double v : g.channel(k)) acc += absolute ? std::abs(v) : v;
        out.w[k] = acc / z;
    }
    return out;
}

void check_channels(const model::FeatureStack& features, const ChannelWeights& weights) {
    if (static_cast<int>(weights.w.size()) != features.channel_count())
        throw std::invalid_argument("channel weights have length " + std::to_string(weights.w.size()) +
                                    " but the feature stack has " + std::to_string(features.channel_count()) +
                                    " channels");
}

} // namespace

ChannelWeights abs_grad_weights(const model::GradStack& grads) { return pooled(grads, true); }

ChannelWeights grad_cam_weights(const model::GradStack& grads) { return pooled(grads, false); }

ChannelWeights grad_cam_pp_weights(const model::FeatureStack& features, const model::GradStack& grads) {
    const auto& A = features.activations;
    const auto& g = grads.grads;
    if (A.channels != g.channels || A.plane() != g.plane())
        throw std::invalid_argument("grad_cam_pp_weights: feature and gradient shapes differ");
    ChannelWeights out{std::vector<double>(g.channels, 0.0), grads.target_class};
    for (int k = 0; k < g.channels; ++k) {
        double sum_a = 0.0;
        for (double a : A.channel(k)) sum_a += a;
        double w = 0.0;
        for (double gv : g.channel(k)) {
            const double g2 = gv * gv;
            double denom = 2.0 * g2 + sum_a * g2 * gv;
            if (denom == 0.0) denom = 1.0;
            w += (g2 / denom) * std::max(gv, 0.0);
        }
        out.w[k] = w;
    }
    return out;
}

Grid weighted_sum(const model::FeatureStack& features, const ChannelWeights& weights) {
    check_channels(features, weights);
    const auto& A = features.activations;
    Grid sum(A.height, A.width);
    for (int k = 0; k < A.channels; ++k) {
        const auto ch = A.channel(k);
        for (std::size_t n = 0; n < ch.size(); ++n) sum.values[n] += weights.w[k] * ch[n];
    }
    return sum;
}

namespace {

Grid relu(Grid g) {
    for (double& v : g.values) v = std::max(v, 0.0);
    return g;
}

// relu → upsample → normalize, the shared tail of the gradient-weighted methods.
Grid cam_tail(const Grid& low_res, int height, int width, std::string_view stage) {
    return normalize(upsample(relu(low_res), height, width), stage);
}

} // namespace

SaliencyMap abs_cam_init(const model::FeatureStack& features, const ChannelWeights& weights, int height, int width) {
    return {cam_tail(weighted_sum(features, weights), height, width, "abs-cam-init"), weights.class_index,
            "abs-cam-init"};
}

Grid channel_map(const model::FeatureStack& features, const ChannelWeights& weights, int k, int height, int width) {
    check_channels(features, weights);
    Grid scaled = features.activations.channel_grid(k);
    for (double& v : scaled.values) v *= weights.w[k];
    return normalize(upsample(scaled, height, width), "abs-cam phase 1");
}

ChannelSaliencySet channel_maps(const model::FeatureStack& features, const ChannelWeights& weights, int height,
                                int width) {
    ChannelSaliencySet set;
    set.maps.reserve(features.channel_count());
    for (int k = 0; k < features.channel_count(); ++k) set.maps.push_back(channel_map(features, weights, k, height, width));
    return set;
}

double masked_score(const model::Classifier& model, const imaging::ImageTensor& image,
                    const imaging::NormalizationStats& stats, const Grid& mask, int class_index) {
    const auto masked = imaging::multiply(image, mask);
    return model::score(model::forward(model, imaging::normalize(masked, stats)), class_index).prob;
}

std::vector<double> rescore(const model::Classifier& model, const imaging::ImageTensor& image,
                            const imaging::NormalizationStats& stats, const MaskFn& mask, int count,
                            int class_index, int workers) {
    std::vector<double> scores(std::max(count, 0), 0.0);
    workers = std::clamp(workers, 1, std::max(count, 1));
    if (workers == 1) {
        for (int k = 0; k < count; ++k) scores[k] = masked_score(model, image, stats, mask(k), class_index);
        return scores;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&, t, local = model]() {
            try {
                for (int k = t; k < count; k += workers)
                    scores[k] = masked_score(local, image, stats, mask(k), class_index);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return scores;
}

Grid combine(const MaskFn& mask, const std::vector<double>& scores, int height, int width) {
    Grid acc(height, width);
    for (std::size_t k = 0; k < scores.size(); ++k) {
        const Grid m = mask(static_cast<int>(k));
        for (std::size_t n = 0; n < acc.size(); ++n) acc.values[n] += scores[k] * m.values[n];
    }
    return normalize(relu(std::move(acc)), "final combination");
}

namespace {

void check_spatial(const imaging::ImageTensor& image, const imaging::NormalizedInput& input) {
    if (image.height() != input.tensor.height || image.width() != input.tensor.width)
        throw std::invalid_argument("image and normalized input have different dimensions");
}

} // namespace

SaliencyMap abs_cam(const model::Classifier& model, const imaging::ImageTensor& image,
                    const imaging::NormalizedInput& input, const model::LayerRef& layer, int class_index,
                    int workers) {
    check_spatial(image, input);
    const int h = image.height(), w = image.width();
    const auto probe = model::probe(model, input.tensor, layer, class_index);
    const int channels = probe.features.channel_count();
    if (channels == 0) throw std::invalid_argument("abs-cam: target layer has no channels");
    const auto weights = abs_grad_weights(probe.gradient);
    const MaskFn mask = [&](int k) { return channel_map(probe.features, weights, k, h, w); };
    const auto scores = rescore(model, image, input.stats, mask, channels, class_index, workers);
    return {combine(mask, scores, h, w), class_index, "abs-cam"};
}

SaliencyMap grad_cam(const model::Classifier& model, const imaging::NormalizedInput& input,
                     const model::LayerRef& layer, int class_index) {
    const auto probe = model::probe(model, input.tensor, layer, class_index);
    const auto weights = grad_cam_weights(probe.gradient);
    return {cam_tail(weighted_sum(probe.features, weights), input.tensor.height, input.tensor.width, "grad-cam"),
            class_index, "grad-cam"};
}

SaliencyMap grad_cam_pp(const model::Classifier& model, const imaging::NormalizedInput& input,
                        const model::LayerRef& layer, int class_index) {
    const auto probe = model::probe(model, input.tensor, layer, class_index);
    const auto weights = grad_cam_pp_weights(probe.features, probe.gradient);
    return {cam_tail(weighted_sum(probe.features, weights), input.tensor.height, input.tensor.width, "grad-cam++"),
            class_index, "grad-cam++"};
}

SaliencyMap smooth_grad_cam_pp(const model::Classifier& model, const imaging::NormalizedInput& input,
                               const model::LayerRef& layer, int class_index, int samples, double noise,
                               std::uint64_t seed) {
    if (samples < 1) throw std::invalid_argument("sg-cam++: sample count must be at least 1");
    if (!(noise >= 0.0)) throw std::invalid_argument("sg-cam++: noise std must be nonnegative");
    model::NormalStream rng(seed, 0x5C);
    Grid acc;
    for (int s = 0; s < samples; ++s) {
        Tensor3 noisy = input.tensor;
        for (double& v : noisy.values) v += noise * rng.next();
        const auto probe = model::probe(model, noisy, layer, class_index);
        const Grid cam = weighted_sum(probe.features, grad_cam_pp_weights(probe.features, probe.gradient));
        if (s == 0) {
            acc = Grid(cam.height, cam.width);
        }
        for (std::size_t n = 0; n < acc.size(); ++n) acc.values[n] += cam.values[n];
    }
    for (double& v : acc.values) v /= samples;
    return {cam_tail(acc, input.tensor.height, input.tensor.width, "sg-cam++"), class_index, "sg-cam++"};
}

SaliencyMap score_cam(const model::Classifier& model, const imaging::ImageTensor& image,
                      const imaging::NormalizedInput& input, const model::LayerRef& layer, int class_index,
                      int workers) {
    check_spatial(image, input);
    const int h = image.height(), w = image.width();
    const auto features = model::feature_maps(model, input, layer);
    const int channels = features.channel_count();
    if (channels == 0) throw std::invalid_argument("score-cam: target layer has no channels");
    const MaskFn mask = [&](int k) {
        return normalize(upsample(features.activations.channel_grid(k), h, w), "score-cam mask");
    };
    const auto scores = rescore(model, image, input.stats, mask, channels, class_index, workers);
    return {combine(mask, scores, h, w), class_index, "score-cam"};
}

int predicted_class(const model::Classifier& model, const imaging::NormalizedInput& input) {
    return model::forward(model, input).argmax();
}

// --- registry ------------------------------------------------------------------

namespace {

struct Registry {
    std::mutex mutex;
    std::map<std::string, Method> methods;

    Registry() {
        methods["abs-cam"] = [](const MethodRequest& r) {
            return abs_cam(r.model, r.image, r.input, r.layer, r.class_index, r.params.workers);
        };
        methods["abs-cam-init"] = [](const MethodRequest& r) {
            const auto p = model::probe(r.model, r.input.tensor, r.layer, r.class_index);
            return abs_cam_init(p.features, abs_grad_weights(p.gradient), r.image.height(), r.image.width());
        };
        methods["grad-cam"] = [](const MethodRequest& r) {
            return grad_cam(r.model, r.input, r.layer, r.class_index);
        };
        methods["grad-cam++"] = [](const MethodRequest& r) {
            return grad_cam_pp(r.model, r.input, r.layer, r.class_index);
        };
        methods["sg-cam++"] = [](const MethodRequest& r) {
            return smooth_grad_cam_pp(r.model, r.input, r.layer, r.class_index, r.params.sg_samples,
                                      r.params.sg_noise, r.params.seed);
        };
        methods["score-cam"] = [](const MethodRequest& r) {
            return score_cam(r.model, r.image, r.input, r.layer, r.class_index, r.params.workers);
        };
    }
};

Registry& registry() {
    static Registry instance;
    return instance;
}

} // namespace

void register_method(const std::string& id, Method method) {
    if (id.empty()) throw std::invalid_argument("method id must be nonempty");
    if (!method) throw std::invalid_argument("method '" + id + "' has no implementation");
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    r.methods[id] = std::move(method);
}

bool has_method(const std::string& id) {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    return r.methods.count(id) > 0;
}

std::vector<std::string> method_ids() {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    std::vector<std::string> ids;
    for (const auto& [id, fn] : r.methods) ids.push_back(id);
    return ids;
}

SaliencyMap run_method(const std::string& id, const MethodRequest& request) {
    Method fn;
    {
        auto& r = registry();
        std::lock_guard lock(r.mutex);
        const auto it = r.methods.find(id);
        if (it == r.methods.end()) throw std::invalid_argument("unknown method '" + id + "'");
        fn = it->second;
    }
    SaliencyMap map = fn(request);
    if (map.values.height != request.image.height() || map.values.width != request.image.width())
        throw std::invalid_argument("method '" + id + "' returned a map with the wrong dimensions");
    map.method_id = id;
    map.class_index = request.class_index;
    return map;
}

} // namespace abscam::cam
