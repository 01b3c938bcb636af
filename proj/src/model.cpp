#include "abscam/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

namespace abscam::model {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::GlobalAvgPool: return "gap";
    case LayerKind::Linear: return "linear";
    }
    return "?";
}

// --- layer kernels ------------------------------------------------------------

namespace {

int conv_out(int n, int k, int stride, int pad) { return n + 2 * pad < k ? 0 : (n + 2 * pad - k) / stride + 1; }

std::string dims(const Tensor3& t) {
    std::ostringstream s;
    s << t.channels << "x" << t.height << "x" << t.width;
    return s.str();
}

Tensor3 conv_forward(const Layer& L, const Tensor3& x) {
    if (x.channels != L.in_channels)
        throw AdapterError("layer " + L.name + ": expected " + std::to_string(L.in_channels) +
                           " input channels, got " + dims(x));
    const int oh = conv_out(x.height, L.kernel, L.stride, L.padding);
    const int ow = conv_out(x.width, L.kernel, L.stride, L.padding);
    if (oh < 1 || ow < 1) throw AdapterError("layer " + L.name + ": input " + dims(x) + " is too small");
    const auto& W = L.params->weight;
    const auto& B = L.params->bias;
    const int k = L.kernel;
    Tensor3 y(L.out_channels, oh, ow);
    for (int o = 0; o < L.out_channels; ++o) {
        auto out = y.channel(o);
        std::fill(out.begin(), out.end(), B[o]);
        for (int c = 0; c < L.in_channels; ++c) {
            const double* w = W.data() + (static_cast<std::size_t>(o) * L.in_channels + c) * k * k;
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double acc = 0.0;
                    for (int u = 0; u < k; ++u) {
                        const int si = i * L.stride - L.padding + u;
                        if (si < 0 || si >= x.height) continue;
                        for (int v = 0; v < k; ++v) {
                            const int sj = j * L.stride - L.padding + v;
                            if (sj < 0 || sj >= x.width) continue;
                            acc += w[u * k + v] * x.at(c, si, sj);
                        }
                    }
                    y.at(o, i, j) += acc;
                }
        }
    }
    if (L.relu)
        for (double& v : y.values) v = std::max(v, 0.0);
    return y;
}

Tensor3 conv_backward(const Layer& L, const Tensor3& x, const Tensor3& y, Tensor3 gy) {
    if (L.relu)
        for (std::size_t n = 0; n < gy.size(); ++n)
            if (!(y.values[n] > 0.0)) gy.values[n] = 0.0;
    const auto& W = L.params->weight;
    const int k = L.kernel;
    Tensor3 gx(x.channels, x.height, x.width);
    for (int o = 0; o < L.out_channels; ++o)
        for (int c = 0; c < L.in_channels; ++c) {
            const double* w = W.data() + (static_cast<std::size_t>(o) * L.in_channels + c) * k * k;
            for (int i = 0; i < y.height; ++i)
                for (int j = 0; j < y.width; ++j) {
                    const double g = gy.at(o, i, j);
                    if (g == 0.0) continue;
                    for (int u = 0; u < k; ++u) {
                        const int si = i * L.stride - L.padding + u;
                        if (si < 0 || si >= x.height) continue;
                        for (int v = 0; v < k; ++v) {
                            const int sj = j * L.stride - L.padding + v;
                            if (sj < 0 || sj >= x.width) continue;
                            gx.at(c, si, sj) += w[u * k + v] * g;
                        }
                    }
                }
        }
    return gx;
}

Tensor3 maxpool_forward(const Layer& L, const Tensor3& x) {
    const int oh = conv_out(x.height, L.kernel, L.stride, 0);
    const int ow = conv_out(x.width, L.kernel, L.stride, 0);
    if (oh < 1 || ow < 1) throw AdapterError("layer " + L.name + ": input " + dims(x) + " is too small");
    Tensor3 y(x.channels, oh, ow);
    for (int c = 0; c < x.channels; ++c)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                double best = -std::numeric_limits<double>::infinity();
                for (int u = 0; u < L.kernel; ++u)
                    for (int v = 0; v < L.kernel; ++v)
                        best = std::max(best, x.at(c, i * L.stride + u, j * L.stride + v));
                y.at(c, i, j) = best;
            }
    return y;
}

// Gradient goes to the first maximal element in scan order.
Tensor3 maxpool_backward(const Layer& L, const Tensor3& x, const Tensor3& y, const Tensor3& gy) {
    Tensor3 gx(x.channels, x.height, x.width);
    for (int c = 0; c < x.channels; ++c)
        for (int i = 0; i < y.height; ++i)
            for (int j = 0; j < y.width; ++j) {
                const double target = y.at(c, i, j);
                bool done = false;
                for (int u = 0; u < L.kernel && !done; ++u)
                    for (int v = 0; v < L.kernel && !done; ++v) {
                        const int si = i * L.stride + u;
                        const int sj = j * L.stride + v;
                        if (x.at(c, si, sj) == target) {
                            gx.at(c, si, sj) += gy.at(c, i, j);
                            done = true;
                        }
                    }
            }
    return gx;
}

Tensor3 gap_forward(const Tensor3& x) {
    Tensor3 y(x.channels, 1, 1);
    for (int c = 0; c < x.channels; ++c) {
        auto ch = x.channel(c);
        y.values[c] = std::accumulate(ch.begin(), ch.end(), 0.0) / static_cast<double>(x.plane());
    }
    return y;
}

Tensor3 gap_backward(const Tensor3& x, const Tensor3& gy) {
    Tensor3 gx(x.channels, x.height, x.width);
    const double inv = 1.0 / static_cast<double>(x.plane());
    for (int c = 0; c < x.channels; ++c) {
        auto ch = gx.channel(c);
        std::fill(ch.begin(), ch.end(), gy.values[c] * inv);
    }
    return gx;
}

Tensor3 linear_forward(const Layer& L, const Tensor3& x) {
    if (static_cast<int>(x.size()) != L.in_features)
        throw AdapterError("layer " + L.name + ": expected " + std::to_string(L.in_features) +
                           " input features, got " + dims(x));
    const auto& W = L.params->weight;
    const auto& B = L.params->bias;
    Tensor3 y(L.out_features, 1, 1);
    for (int o = 0; o < L.out_features; ++o) {
        const double* w = W.data() + static_cast<std::size_t>(o) * L.in_features;
        double acc = B[o];
        for (int n = 0; n < L.in_features; ++n) acc += w[n] * x.values[n];
        y.values[o] = L.relu ? std::max(acc, 0.0) : acc;
    }
    return y;
}

Tensor3 linear_backward(const Layer& L, const Tensor3& x, const Tensor3& y, const Tensor3& gy) {
    const auto& W = L.params->weight;
    Tensor3 gx(x.channels, x.height, x.width);
    for (int o = 0; o < L.out_features; ++o) {
        double g = gy.values[o];
        if (L.relu && !(y.values[o] > 0.0)) g = 0.0;
        if (g == 0.0) continue;
        const double* w = W.data() + static_cast<std::size_t>(o) * L.in_features;
        for (int n = 0; n < L.in_features; ++n) gx.values[n] += w[n] * g;
    }
    return gx;
}

Tensor3 layer_forward(const Layer& L, const Tensor3& x) {
    switch (L.kind) {
    case LayerKind::Conv2d: return conv_forward(L, x);
    case LayerKind::MaxPool: return maxpool_forward(L, x);
    case LayerKind::GlobalAvgPool: return gap_forward(x);
    case LayerKind::Linear: return linear_forward(L, x);
    }
    throw AdapterError("unknown layer kind");
}

Tensor3 layer_backward(const Layer& L, const Tensor3& x, const Tensor3& y, const Tensor3& gy) {
    switch (L.kind) {
    case LayerKind::Conv2d: return conv_backward(L, x, y, gy);
    case LayerKind::MaxPool: return maxpool_backward(L, x, y, gy);
    case LayerKind::GlobalAvgPool: return gap_backward(x, gy);
    case LayerKind::Linear: return linear_backward(L, x, y, gy);
    }
    throw AdapterError("unknown layer kind");
}

std::size_t expected_weight_count(const Layer& L) {
    if (L.kind == LayerKind::Conv2d)
        return static_cast<std::size_t>(L.out_channels) * L.in_channels * L.kernel * L.kernel;
    if (L.kind == LayerKind::Linear) return static_cast<std::size_t>(L.out_features) * L.in_features;
    return 0;
}

std::size_t expected_bias_count(const Layer& L) {
    if (L.kind == LayerKind::Conv2d) return static_cast<std::size_t>(L.out_channels);
    if (L.kind == LayerKind::Linear) return static_cast<std::size_t>(L.out_features);
    return 0;
}

void validate_params(const Layer& L, const LayerParams& p) {
    if (p.weight.size() != expected_weight_count(L) || p.bias.size() != expected_bias_count(L))
        throw AdapterError("layer " + L.name + ": parameter block has the wrong size");
}

} // namespace

// --- classifier -----------------------------------------------------------------

Classifier::Classifier(std::string model_id, std::vector<Layer> layers, int nominal_height, int nominal_width)
    : model_id_(std::move(model_id)), layers_(std::move(layers)),
      nominal_height_(nominal_height), nominal_width_(nominal_width) {
    if (layers_.empty()) throw AdapterError("classifier needs at least one layer");
    if (layers_.back().kind != LayerKind::Linear) throw AdapterError("classifier must end in a linear layer");
    for (std::size_t a = 0; a < layers_.size(); ++a) {
        const Layer& L = layers_[a];
        if (L.name.empty()) throw AdapterError("layer names must be nonempty");
        for (std::size_t b = 0; b < a; ++b)
            if (layers_[b].name == L.name) throw AdapterError("duplicate layer name " + L.name);
        if (L.has_parameters()) {
            if (!L.params) throw AdapterError("layer " + L.name + " has no parameters");
            validate_params(L, *L.params);
        }
        if ((L.kind == LayerKind::Conv2d || L.kind == LayerKind::MaxPool) && (L.kernel < 1 || L.stride < 1))
            throw AdapterError("layer " + L.name + ": kernel and stride must be positive");
    }
    num_classes_ = layers_.back().out_features;
    if (num_classes_ < 1) throw AdapterError("classifier must have at least one class");
}

std::vector<std::string> Classifier::layer_names() const {
    std::vector<std::string> names;
    names.reserve(layers_.size());
    for (const auto& L : layers_) names.push_back(L.name);
    return names;
}

LayerRef Classifier::layer(std::string_view name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i].name == name) return {layers_[i].name, static_cast<int>(i)};
    std::string list;
    for (const auto& L : layers_) list += (list.empty() ? "" : ", ") + L.name;
    throw AdapterError("unknown layer '" + std::string(name) + "'; available layers: " + list);
}

LayerRef Classifier::default_target_layer() const {
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i)
        if (layers_[i].spatial_output()) return {layers_[i].name, i};
    throw AdapterError("model " + model_id_ + " has no spatial layer");
}

void Classifier::set_parameters(int index, LayerParams params) {
    if (index < 0 || index >= static_cast<int>(layers_.size())) throw AdapterError("layer index out of range");
    Layer& L = layers_[index];
    if (!L.has_parameters()) throw AdapterError("layer " + L.name + " has no parameters");
    validate_params(L, params);
    L.params = std::make_shared<const LayerParams>(std::move(params));
}

// --- inference ------------------------------------------------------------------

int Scores::argmax() const {
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) total += (p[i] = std::exp(logits[i] - top));
    for (double& v : p) v /= total;
    return p;
}

namespace {

void check_input(const Classifier& model, const Tensor3& input) {
    const Layer& first = model.layers().front();
    const int channels = first.kind == LayerKind::Conv2d ? first.in_channels : 3;
    if (input.channels != channels || input.height < 1 || input.width < 1)
        throw AdapterError("model " + model.model_id() + ": input " + dims(input) + " rejected; expected " +
                           std::to_string(channels) + "x" + std::to_string(model.nominal_height()) + "x" +
                           std::to_string(model.nominal_width()));
}

// Runs the network and keeps every intermediate; trace[0] is the input.
std::vector<Tensor3> run_trace(const Classifier& model, const Tensor3& input) {
    check_input(model, input);
    std::vector<Tensor3> trace;
    trace.reserve(model.layers().size() + 1);
    trace.push_back(input);
    try {
        for (const auto& L : model.layers()) trace.push_back(layer_forward(L, trace.back()));
    } catch (const AdapterError& e) {
        throw AdapterError(std::string(e.what()) + " (nominal input 3x" + std::to_string(model.nominal_height()) +
                           "x" + std::to_string(model.nominal_width()) + ")");
    }
    return trace;
}

void check_layer(const Classifier& model, const LayerRef& layer) {
    if (layer.index < 0 || layer.index >= static_cast<int>(model.layers().size()) ||
        model.layers()[layer.index].name != layer.name)
        model.layer(layer.name);  // throws with the list of available layers
}

void check_class(const Classifier& model, int class_index) {
    if (class_index < 0 || class_index >= model.num_classes())
        throw AdapterError("class " + std::to_string(class_index) + " out of range [0," +
                           std::to_string(model.num_classes()) + ")");
}

} // namespace

Scores forward(const Classifier& model, const Tensor3& input) {
    auto trace = run_trace(model, input);
    Scores s;
    s.logits = std::move(trace.back().values);
    s.probs = softmax(s.logits);
    return s;
}

Scores forward(const Classifier& model, const imaging::NormalizedInput& input) {
    return forward(model, input.tensor);
}

ScorePair score(const Scores& scores, int class_index) {
    if (class_index < 0 || class_index >= static_cast<int>(scores.logits.size()))
        throw AdapterError("class " + std::to_string(class_index) + " out of range");
    return {scores.logits[class_index], scores.probs[class_index]};
}

std::vector<double> forward_from(const Classifier& model, const LayerRef& layer, const Tensor3& activations) {
    check_layer(model, layer);
    Tensor3 x = activations;
    for (std::size_t i = layer.index + 1; i < model.layers().size(); ++i) x = layer_forward(model.layers()[i], x);
    return std::move(x.values);
}

FeatureStack feature_maps(const Classifier& model, const imaging::NormalizedInput& input, const LayerRef& layer) {
    check_layer(model, layer);
    auto trace = run_trace(model, input.tensor);
    return {std::move(trace[layer.index + 1])};
}

LayerProbe probe(const Classifier& model, const Tensor3& input, const LayerRef& layer, int class_index) {
    check_layer(model, layer);
    check_class(model, class_index);
    if (!model.layers()[layer.index].spatial_output())
        throw AdapterError("layer " + layer.name + " (" + std::string(to_string(model.layers()[layer.index].kind)) +
                           ") has no spatial feature maps to differentiate");
    auto trace = run_trace(model, input);
    const int n = static_cast<int>(model.layers().size());
    Tensor3 g(trace.back().channels, 1, 1);
    g.values[class_index] = 1.0;
    for (int i = n - 1; i > layer.index; --i) g = layer_backward(model.layers()[i], trace[i], trace[i + 1], g);

    LayerProbe out;
    out.scores.logits = trace.back().values;
    out.scores.probs = softmax(out.scores.logits);
    out.features.activations = std::move(trace[layer.index + 1]);
    out.gradient.grads = std::move(g);
    out.gradient.target_class = class_index;
    return out;
}

GradStack class_gradient(const Classifier& model, const imaging::NormalizedInput& input,
                         const LayerRef& layer, int class_index) {
    return probe(model, input.tensor, layer, class_index).gradient;
}

// --- randomization ----------------------------------------------------------------

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
}

double NormalStream::next() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    constexpr double two_pi = 6.283185307179586476925286766559;
    // uniform in (0,1]: avoids log(0)
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(two_pi * u2);
    has_spare_ = true;
    return r * std::cos(two_pi * u2);
}

std::optional<RandomizationMode> parse_randomization_mode(std::string_view s) {
    if (s == "cascade" || s == "CR") return RandomizationMode::Cascade;
    if (s == "independent" || s == "IR") return RandomizationMode::Independent;
    return std::nullopt;
}

std::string_view to_string(RandomizationMode mode) {
    return mode == RandomizationMode::Cascade ? "cascade" : "independent";
}

namespace {

double stddev(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

LayerParams redraw(const LayerParams& original, std::uint64_t seed, int layer_index) {
    NormalStream rng(seed, static_cast<std::uint64_t>(layer_index));
    LayerParams p{original.weight, original.bias};
    const double ws = stddev(original.weight);
    const double bs = stddev(original.bias);
    for (double& w : p.weight) w = ws * rng.next();
    for (double& b : p.bias) b = bs * rng.next();
    return p;
}

} // namespace

std::vector<LayerRef> parameterized_layers_top_down(const Classifier& model) {
    std::vector<LayerRef> out;
    for (int i = static_cast<int>(model.layers().size()) - 1; i >= 0; --i)
        if (model.layers()[i].has_parameters()) out.push_back({model.layers()[i].name, i});
    return out;
}

Classifier randomize_layers(const Classifier& model, RandomizationMode mode, const LayerRef& target,
                            std::uint64_t seed, Warnings* warnings) {
    check_layer(model, target);
    Classifier copy = model;
    const auto& layers = model.layers();
    if (mode == RandomizationMode::Independent && !layers[target.index].has_parameters()) {
        if (warnings) warnings->push_back("layer " + target.name + " has no parameters; randomization is a no-op");
        return copy;
    }
    const int lo = target.index;
    const int hi = mode == RandomizationMode::Cascade ? static_cast<int>(layers.size()) - 1 : target.index;
    for (int i = hi; i >= lo; --i) {
        if (!layers[i].has_parameters()) continue;
        copy.set_parameters(i, redraw(*layers[i].params, seed, i));
    }
    return copy;
}

std::uint64_t parameter_checksum(const Classifier& model) {
    std::uint64_t h = 1469598103934665603ull;
    auto feed = [&](const std::vector<double>& v) {
        for (double d : v) {
            unsigned char bytes[sizeof d];
            std::memcpy(bytes, &d, sizeof d);
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ull;
            }
        }
    };
    for (const auto& L : model.layers()) {
        if (!L.params) continue;
        feed(L.params->weight);
        feed(L.params->bias);
    }
    return h;
}

// --- reference network ---------------------------------------------------------------

namespace {

Layer conv_layer(std::string name, int in, int out, NormalStream& rng) {
    Layer L;
    L.name = std::move(name);
    L.kind = LayerKind::Conv2d;
    L.in_channels = in;
    L.out_channels = out;
    L.kernel = 3;
    L.stride = 1;
    L.padding = 1;
    L.relu = true;
    LayerParams p;
    p.weight.resize(static_cast<std::size_t>(out) * in * 9);
    const double s = std::sqrt(2.0 / (in * 9.0));
    for (double& w : p.weight) w = s * rng.next();
    p.bias.assign(out, 0.0);
    L.params = std::make_shared<const LayerParams>(std::move(p));
    return L;
}

Layer pool_layer(std::string name) {
    Layer L;
    L.name = std::move(name);
    L.kind = LayerKind::MaxPool;
    L.kernel = 2;
    L.stride = 2;
    return L;
}

Layer linear_layer(std::string name, int in, int out, NormalStream& rng, double bias_std) {
    Layer L;
    L.name = std::move(name);
    L.kind = LayerKind::Linear;
    L.in_features = in;
    L.out_features = out;
    LayerParams p;
    p.weight.resize(static_cast<std::size_t>(out) * in);
    const double s = std::sqrt(1.0 / in);
    for (double& w : p.weight) w = s * rng.next();
    p.bias.resize(out);
    for (double& b : p.bias) b = bias_std * rng.next();
    L.params = std::make_shared<const LayerParams>(std::move(p));
    return L;
}

} // namespace

Classifier build_reference_cnn(std::uint64_t seed) {
    NormalStream rng(seed, 0x5EEDull);
    std::vector<Layer> layers;
    layers.push_back(conv_layer("conv1", 3, 8, rng));
    layers.push_back(pool_layer("pool1"));
    layers.push_back(conv_layer("conv2", 8, 16, rng));
    layers.push_back(pool_layer("pool2"));
    layers.push_back(conv_layer("conv3", 16, 16, rng));
    Layer gap;
    gap.name = "gap";
    gap.kind = LayerKind::GlobalAvgPool;
    layers.push_back(gap);
    layers.push_back(linear_layer("fc1", 16, 16, rng, 0.0));
    Layer fc2 = linear_layer("fc2", 16, kReferenceClasses, rng, 0.1);
    {
        LayerParams p = *fc2.params;
        std::fill_n(p.weight.begin() + kReferenceMaskedClass * 16, 16, 0.0);
        fc2.params = std::make_shared<const LayerParams>(std::move(p));
    }
    layers.push_back(std::move(fc2));
    return Classifier("reference-cnn", std::move(layers), kReferenceInputSize, kReferenceInputSize);
}

} // namespace abscam::model
