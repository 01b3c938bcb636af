#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace abscam::cli {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr int kSchemaVersion = 1;

/// Bad flag values; maps to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string model = "reference-cnn";
    std::string layer;  // empty → model default
    std::vector<std::string> methods{"abs-cam"};
    std::string class_mode = "auto";  // "auto" or a class index
    std::string images;
    std::string annotations;
    std::string out = "abscam-out";
    int steps = 100;
    double mask_fraction = 0.5;
    std::string baseline = "zeros";
    double sigma = 5.0;
    std::vector<std::uint64_t> seeds{0};
    int workers = 1;
    int sg_samples = 8;
    double sg_noise = 0.1;
    double alpha = 0.5;
    bool strip = false;
};

/// Throws UsageError for out-of-range knobs, unknown methods and unknown baselines.
void validate(const RunConfig& config);

/// Image files (png/jpg/jpeg) directly inside `dir`, sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

int cmd_explain(const RunConfig& config);
int cmd_evaluate(const RunConfig& config);
int cmd_pointing(const RunConfig& config);
int cmd_sanity(const RunConfig& config);

} // namespace abscam::cli
