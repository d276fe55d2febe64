#pragma once

// The `rtdet` command line. Kept as a library so tests can drive it in
// process and inspect the option table.

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace rtdet::cli {

enum ExitCode : int { kOk = 0, kError = 1, kFindings = 2 };

inline constexpr const char* kDefaultListen = "127.0.0.1:7878";
inline constexpr double kDefaultTestFraction = 0.2;
inline constexpr double kDefaultTargetRatio = 1.5;
inline constexpr double kDefaultReplaySpeed = 1.0;

struct DatasetOptions {
    std::string dataset;
    std::string labels;
    std::string classes;
};

struct Options {
    DatasetOptions data;

    // validate
    std::string validate_json;

    // split
    double test_fraction = kDefaultTestFraction;
    std::optional<std::uint64_t> seed;
    std::string out;

    // augment
    double target_ratio = kDefaultTargetRatio;
    double flip = 0.5;
    double brightness = 0.0;
    double noise = 0.0;
    double crop = 0.0;
    std::optional<double> dedupe_threshold;
    std::optional<double> sharpness_threshold;

    // evaluate
    std::string detections;
    std::string backend;
    std::vector<double> iou_thresholds{0.5, 0.75};
    double conf_threshold = 0.25;
    std::optional<double> nms_threshold;
    std::string network;

    // run / replay
    std::string config;
    bool headless = false;
    std::string listen = kDefaultListen;
    bool wait_for_start = false;
    std::optional<double> run_conf_threshold;
    std::optional<double> run_nms_threshold;
    std::string artifact;
    double speed = kDefaultReplaySpeed;
    std::string recording;

    // report
    std::vector<std::string> inputs;
};

/// Builds the parser bound to `opts`. Subcommand names: validate, split,
/// augment, evaluate, run, replay, report.
std::unique_ptr<CLI::App> build_app(Options& opts);

/// Parses and executes; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace rtdet::cli
