#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "abscam/imaging.hpp"
#include "abscam/tensor.hpp"

namespace abscam::model {

enum class LayerKind { Conv2d, MaxPool, GlobalAvgPool, Linear };

std::string_view to_string(LayerKind kind);

struct LayerParams {
    std::vector<double> weight;
    std::vector<double> bias;
};

/// One stage of a sequential classifier. Conv2d and Linear may carry a fused ReLU,
/// in which case the layer's output (and the gradient taken at it) is post-ReLU.
struct Layer {
    std::string name;
    LayerKind kind = LayerKind::Conv2d;
    int in_channels = 0;   // Conv2d
    int out_channels = 0;  // Conv2d
    int kernel = 0;        // Conv2d, MaxPool
    int stride = 1;        // Conv2d, MaxPool
    int padding = 0;       // Conv2d
    int in_features = 0;   // Linear
    int out_features = 0;  // Linear
    bool relu = false;
    std::shared_ptr<const LayerParams> params;

    bool has_parameters() const { return kind == LayerKind::Conv2d || kind == LayerKind::Linear; }
    bool spatial_output() const { return kind == LayerKind::Conv2d || kind == LayerKind::MaxPool; }
};

/// Position of a named layer inside a classifier.
struct LayerRef {
    std::string name;
    int index = -1;
};

/// Sequential image classifier. Copies share parameter blocks, so cloning is cheap;
/// replacing a layer's parameters never touches other copies.
class Classifier {
public:
    Classifier(std::string model_id, std::vector<Layer> layers, int nominal_height, int nominal_width);

    const std::string& model_id() const { return model_id_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<std::string> layer_names() const;
    int num_classes() const { return num_classes_; }
    int nominal_height() const { return nominal_height_; }
    int nominal_width() const { return nominal_width_; }

    /// Throws AdapterError listing the available layers when the name is unknown.
    LayerRef layer(std::string_view name) const;
    /// Last layer with spatial output, the conventional CAM target.
    LayerRef default_target_layer() const;

    void set_parameters(int index, LayerParams params);

private:
    std::string model_id_;
    std::vector<Layer> layers_;
    int num_classes_ = 0;
    int nominal_height_ = 0;
    int nominal_width_ = 0;
};

struct FeatureStack {
    Tensor3 activations;
    int channel_count() const { return activations.channels; }
    std::size_t pixels_per_channel() const { return activations.plane(); }
};

struct GradStack {
    Tensor3 grads;
    int target_class = 0;
};

struct Scores {
    std::vector<double> logits;
    std::vector<double> probs;
    int argmax() const;
};

struct ScorePair {
    double logit = 0.0;
    double prob = 0.0;
};

/// Activations and class-score gradient at one layer from a single forward/backward pass.
struct LayerProbe {
    FeatureStack features;
    GradStack gradient;
    Scores scores;
};

std::vector<double> softmax(const std::vector<double>& logits);

Scores forward(const Classifier& model, const Tensor3& input);
Scores forward(const Classifier& model, const imaging::NormalizedInput& input);
ScorePair score(const Scores& scores, int class_index);

/// Continues a forward pass from the output of `layer`, with `activations` injected there.
std::vector<double> forward_from(const Classifier& model, const LayerRef& layer, const Tensor3& activations);

FeatureStack feature_maps(const Classifier& model, const imaging::NormalizedInput& input, const LayerRef& layer);

/// Gradient of the pre-softmax logit of `class_index` with respect to the output of `layer`.
GradStack class_gradient(const Classifier& model, const imaging::NormalizedInput& input,
                         const LayerRef& layer, int class_index);

LayerProbe probe(const Classifier& model, const Tensor3& input, const LayerRef& layer, int class_index);

enum class RandomizationMode { Cascade, Independent };

std::optional<RandomizationMode> parse_randomization_mode(std::string_view s);
std::string_view to_string(RandomizationMode mode);

/// Copy of `model` with re-drawn parameters. Cascade re-draws every parameterized layer
/// from the output down to `target`; Independent re-draws `target` only. Weights and
/// biases are drawn from N(0, s²) with s the std of the original block. The stream of
/// each layer depends only on (seed, layer index), so cascade and independent agree on
/// the layers they share.
Classifier randomize_layers(const Classifier& model, RandomizationMode mode, const LayerRef& target,
                            std::uint64_t seed, Warnings* warnings = nullptr);

/// Layers of `model` that carry parameters, ordered output → input.
std::vector<LayerRef> parameterized_layers_top_down(const Classifier& model);

/// FNV-1a over the raw bytes of every parameter block.
std::uint64_t parameter_checksum(const Classifier& model);

inline constexpr int kReferenceClasses = 5;
inline constexpr int kReferenceMaskedClass = 4;
inline constexpr int kReferenceInputSize = 32;

/// Small deterministic CNN used as the desk-scale stand-in for a pretrained network.
///
///   conv1  3→8,  3×3, pad 1, ReLU
///   pool1  max 2×2
///   conv2  8→16, 3×3, pad 1, ReLU
///   pool2  max 2×2
///   conv3  16→16, 3×3, pad 1, ReLU     (default CAM target)
///   gap    global average pool
///   fc1    16→16, no activation
///   fc2    16→5,  no activation
///
/// Conv biases and fc1's bias are zero, so an all-zero input yields fc2's bias as logits.
/// Row 4 of fc2 is zero: class 4 has no path from any feature and its gradients vanish.
/// Accepts any input of at least 4×4; nominal size 32×32.
Classifier build_reference_cnn(std::uint64_t seed);

/// Portable N(0,1) stream (Box-Muller over mt19937_64); identical on every platform.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed, std::uint64_t stream = 0);
    double next();

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// --- weights file ---------------------------------------------------------

void save_weights(const Classifier& model, const std::filesystem::path& path);
Classifier load_weights(const std::filesystem::path& path);

// --- model profiles ----------------------------------------------------------

struct ModelProfile {
    std::string model_id = "reference-cnn";
    /// "builtin:reference" or a path to a weights file.
    std::string weights = "builtin:reference";
    std::uint64_t reference_seed = 0;
    std::string target_layer;  // empty → model default
    imaging::NormalizationStats stats;
    int input_height = 224;
    int input_width = 224;
};

ModelProfile parse_profile(std::string_view text, const std::filesystem::path& base_dir = {});
ModelProfile load_profile(const std::filesystem::path& path);
/// Profile of the built-in reference network: 32×32 input, conv3 target, default stats.
ModelProfile reference_profile(std::uint64_t seed = 0);
Classifier instantiate(const ModelProfile& profile);

} // namespace abscam::model
