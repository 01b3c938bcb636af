#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "abscam/imaging.hpp"
#include "abscam/model.hpp"

namespace abscam::cam {

struct ChannelWeights {
    std::vector<double> w;
    int class_index = 0;
};

/// Per-channel maps at image resolution, each min-max normalized.
struct ChannelSaliencySet {
    std::vector<Grid> maps;
};

struct SaliencyMap {
    Grid values;
    int class_index = 0;
    std::string method_id;
};

/// Min-max normalization to [0,1]; a constant map becomes all zeros.
/// Throws NumericError naming `stage` on NaN/Inf input.
Grid normalize(const Grid& map, std::string_view stage = "normalize");

/// Bilinear upsampling with half-pixel centers (no corner alignment).
Grid upsample(const Grid& map, int height, int width);

/// Mean of |gradient| per channel.
ChannelWeights abs_grad_weights(const model::GradStack& grads);
/// Mean of the signed gradient per channel.
ChannelWeights grad_cam_weights(const model::GradStack& grads);
/// Alpha-weighted positive gradients, using the exponential-score closed form
/// alpha = g² / (2g² + ΣA·g³) (a zero denominator is replaced by 1).
ChannelWeights grad_cam_pp_weights(const model::FeatureStack& features, const model::GradStack& grads);

/// Σ_k w[k]·A^k at feature resolution.
Grid weighted_sum(const model::FeatureStack& features, const ChannelWeights& weights);

/// normalize(upsample(relu(Σ_k w[k]·A^k))).
SaliencyMap abs_cam_init(const model::FeatureStack& features, const ChannelWeights& weights, int height, int width);

/// Phase 1 map of one channel: normalize(upsample(w[k]·A^k)).
Grid channel_map(const model::FeatureStack& features, const ChannelWeights& weights, int k, int height, int width);
ChannelSaliencySet channel_maps(const model::FeatureStack& features, const ChannelWeights& weights, int height, int width);

/// Softmax probability of `class_index` for image ⊙ mask, re-normalized with `stats`.
double masked_score(const model::Classifier& model, const imaging::ImageTensor& image,
                    const imaging::NormalizationStats& stats, const Grid& mask, int class_index);

/// Mask producer used by the rescoring phase; must be a pure function of k.
using MaskFn = std::function<Grid(int k)>;

/// Scores every mask k ∈ [0,count) with masked_score. Work is split over `workers`
/// threads, each holding its own copy of the model; results are returned in channel order.
std::vector<double> rescore(const model::Classifier& model, const imaging::ImageTensor& image,
                            const imaging::NormalizationStats& stats, const MaskFn& mask, int count,
                            int class_index, int workers);

/// normalize(relu(Σ_k scores[k]·mask(k))), accumulated in channel order.
Grid combine(const MaskFn& mask, const std::vector<double>& scores, int height, int width);

struct MethodParams {
    int workers = 1;
    int sg_samples = 8;
    double sg_noise = 0.1;
    std::uint64_t seed = 0;
};

SaliencyMap abs_cam(const model::Classifier& model, const imaging::ImageTensor& image,
                    const imaging::NormalizedInput& input, const model::LayerRef& layer, int class_index,
                    int workers = 1);
SaliencyMap grad_cam(const model::Classifier& model, const imaging::NormalizedInput& input,
                     const model::LayerRef& layer, int class_index);
SaliencyMap grad_cam_pp(const model::Classifier& model, const imaging::NormalizedInput& input,
                        const model::LayerRef& layer, int class_index);
/// Grad-CAM++ feature-resolution maps averaged over `samples` copies of the input with
/// N(0, noise²) added in model space, then relu → upsample → normalize.
SaliencyMap smooth_grad_cam_pp(const model::Classifier& model, const imaging::NormalizedInput& input,
                               const model::LayerRef& layer, int class_index, int samples, double noise,
                               std::uint64_t seed);
SaliencyMap score_cam(const model::Classifier& model, const imaging::ImageTensor& image,
                      const imaging::NormalizedInput& input, const model::LayerRef& layer, int class_index,
                      int workers = 1);

/// argmax of the softmax output on the unmasked input.
int predicted_class(const model::Classifier& model, const imaging::NormalizedInput& input);

// --- registry ------------------------------------------------------------------

struct MethodRequest {
    const model::Classifier& model;
    const imaging::ImageTensor& image;
    const imaging::NormalizedInput& input;
    model::LayerRef layer;
    int class_index = 0;
    MethodParams params;
};

using Method = std::function<SaliencyMap(const MethodRequest&)>;

/// Built-in ids: abs-cam, abs-cam-init, grad-cam, grad-cam++, sg-cam++, score-cam.
/// Additional methods can be registered at runtime; all access is thread-safe.
void register_method(const std::string& id, Method method);
bool has_method(const std::string& id);
std::vector<std::string> method_ids();
SaliencyMap run_method(const std::string& id, const MethodRequest& request);

} // namespace abscam::cam
