#include <iostream>

#include <CLI11.hpp>

#include "abscam/abscam.h"
#include "runner.hpp"

using namespace abscam::cli;

int main(int argc, char** argv) {
    CLI::App app{"Class activation maps and saliency metrics for image classifiers"};
    app.set_version_flag("--version", abscam_version());
    app.set_config("--config", "", "Read flags from a key = value file; command-line flags win");
    app.require_subcommand(1);
    app.fallthrough();

    RunConfig config;
    app.add_option("--model", config.model, "Built-in model id or model profile path")->capture_default_str();
    app.add_option("--layer", config.layer, "Target layer (default: the model's last conv layer)");
    app.add_option("--method", config.methods, "Method id, repeatable")->capture_default_str();
    app.add_option("--class", config.class_mode, "'auto' (predicted class) or a class index")->capture_default_str();
    app.add_option("--images", config.images, "Directory of .png/.jpg/.jpeg images");
    app.add_option("--annotations", config.annotations, "Bounding-box CSV");
    app.add_option("--out", config.out, "Output directory")->capture_default_str();
    app.add_option("--steps", config.steps, "Deletion/insertion steps")->capture_default_str();
    app.add_option("--mask-fraction", config.mask_fraction, "Kept fraction for drop/increase")->capture_default_str();
    app.add_option("--baseline", config.baseline, "Deletion baseline: zeros or blur")->capture_default_str();
    app.add_option("--sigma", config.sigma, "Blur sigma in pixels")->capture_default_str();
    app.add_option("--seed", config.seeds, "Seed, repeatable")->capture_default_str();
    app.add_option("--workers", config.workers, "Parallel workers over images")->capture_default_str();
    app.add_option("--sg-samples", config.sg_samples, "SG-CAM++ noise samples")->capture_default_str();
    app.add_option("--sg-noise", config.sg_noise, "SG-CAM++ noise std (normalized units)")->capture_default_str();
    app.add_option("--alpha", config.alpha, "Overlay heatmap opacity")->capture_default_str();

    auto* explain = app.add_subcommand("explain", "Write overlays and heatmaps per image and method");
    auto* evaluate = app.add_subcommand("evaluate", "Drop/increase and deletion/insertion per image and method");
    auto* pointing = app.add_subcommand("pointing", "Pointing game against bounding boxes");
    auto* sanity = app.add_subcommand("sanity", "Similarity under cascade and independent weight randomization");
    sanity->add_flag("--strip", config.strip, "Also write a PNG strip of cascade-randomized maps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitSuccess : kExitUsage;
    }

    try {
        if (explain->parsed()) return cmd_explain(config);
        if (evaluate->parsed()) return cmd_evaluate(config);
        if (pointing->parsed()) return cmd_pointing(config);
        if (sanity->parsed()) return cmd_sanity(config);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
