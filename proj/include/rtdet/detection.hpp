#pragma once

// Detector backends and post-processing: confidence gate, class-wise hard NMS,
// and the oracle detector that perturbs ground truth with misses, jitter and
// clutter false positives.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtdet/frame.hpp"
#include "rtdet/metrics.hpp"
#include "rtdet/random.hpp"

namespace rtdet {

inline constexpr double kDefaultNmsThreshold = 0.45;

/// Keeps detections with confidence >= threshold, order preserved.
inline std::vector<Detection> filter_by_confidence(std::span<const Detection> detections, double threshold) {
    std::vector<Detection> out;
    for (const auto& d : detections) {
        if (d.confidence >= threshold) out.push_back(d);
    }
    return out;
}

/// Class-wise hard non-maximum suppression. Output is sorted by descending
/// confidence (ties by input index).
inline std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold) {
    std::vector<Detection> kept;
    std::map<int, std::vector<std::size_t>> kept_by_class;
    for (std::size_t i : confidence_order(detections)) {
        const auto& d = detections[i];
        auto& same_class = kept_by_class[d.box.class_id];
        const bool suppressed = std::any_of(same_class.begin(), same_class.end(), [&](std::size_t k) {
            return iou(kept[k].box, d.box) >= iou_threshold;
        });
        if (suppressed) continue;
        same_class.push_back(kept.size());
        kept.push_back(d);
    }
    return kept;
}

struct OracleConfig {
    double p_miss = 0.0;
    double jitter_sigma = 0.0;
    double fp_rate = 0.0;
    double tp_confidence_lo = 0.9;
    double tp_confidence_hi = 1.0;
    double fp_confidence_lo = 0.05;
    double fp_confidence_hi = 0.6;
    std::uint64_t seed = 0;
    /// Spurious boxes draw their class uniformly from [0, class_count).
    int class_count = 1;

    void validate() const {
        auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!in_unit(p_miss)) throw InvalidArgument("oracle: p_miss must lie in [0,1]");
        if (!(jitter_sigma >= 0.0)) throw InvalidArgument("oracle: jitter_sigma must be >= 0");
        if (!(fp_rate >= 0.0)) throw InvalidArgument("oracle: fp_rate must be >= 0");
        if (!in_unit(tp_confidence_lo) || !in_unit(tp_confidence_hi) || tp_confidence_lo > tp_confidence_hi) {
            throw InvalidArgument("oracle: TP confidence range must satisfy 0 <= lo <= hi <= 1");
        }
        if (!in_unit(fp_confidence_lo) || !in_unit(fp_confidence_hi) || fp_confidence_lo > fp_confidence_hi) {
            throw InvalidArgument("oracle: FP confidence range must satisfy 0 <= lo <= hi <= 1");
        }
        if (class_count < 1) throw InvalidArgument("oracle: class_count must be >= 1");
    }

    /// p_miss = jitter = fp_rate = 0: detections reproduce the truths.
    bool degenerate() const noexcept { return p_miss == 0.0 && jitter_sigma == 0.0 && fp_rate == 0.0; }
};

/// Spurious-box size range (normalized).
inline constexpr double kClutterMinSize = 0.02;
inline constexpr double kClutterMaxSize = 0.3;

/// Deterministic in (config.seed, frame_id); each draw is keyed by
/// (seed, frame_id, box ordinal, purpose), so results do not depend on the
/// number or order of other draws.
inline std::vector<Detection> oracle_detect(std::span<const BoundingBox> frame_truths, const OracleConfig& config,
                                            std::int64_t frame_id) {
    const std::uint64_t seed = config.seed;
    const auto frame = static_cast<std::uint64_t>(frame_id);
    std::vector<Detection> out;
    for (std::size_t i = 0; i < frame_truths.size(); ++i) {
        if (keyed_stream(seed, frame, i, RngPurpose::Miss).uniform() < config.p_miss) continue;
        BoundingBox b = frame_truths[i];
        if (config.jitter_sigma > 0.0) {
            b.cx += keyed_stream(seed, frame, i, RngPurpose::JitterX).normal(0.0, config.jitter_sigma);
            b.cy += keyed_stream(seed, frame, i, RngPurpose::JitterY).normal(0.0, config.jitter_sigma);
            b.w = std::max(b.w + keyed_stream(seed, frame, i, RngPurpose::JitterW).normal(0.0, config.jitter_sigma), 1e-6);
            b.h = std::max(b.h + keyed_stream(seed, frame, i, RngPurpose::JitterH).normal(0.0, config.jitter_sigma), 1e-6);
            const auto clamped = clamp_box(b);
            if (!clamped) continue; // jittered entirely off-frame
            b = *clamped;
        }
        const double conf = keyed_stream(seed, frame, i, RngPurpose::TpConfidence)
                                .uniform(config.tp_confidence_lo, config.tp_confidence_hi);
        out.push_back({b, conf, frame_id});
    }
    if (config.fp_rate > 0.0) {
        const auto n_fp = keyed_stream(seed, frame, 0, RngPurpose::FpCount).poisson(config.fp_rate);
        for (std::uint64_t j = 0; j < n_fp; ++j) {
            auto geo = keyed_stream(seed, frame, j, RngPurpose::FpGeometry);
            const double cx = geo.uniform();
            const double cy = geo.uniform();
            const double w = geo.uniform(kClutterMinSize, kClutterMaxSize);
            const double h = geo.uniform(kClutterMinSize, kClutterMaxSize);
            const int cls = static_cast<int>(keyed_stream(seed, frame, j, RngPurpose::FpClass).next_u64() %
                                             static_cast<std::uint64_t>(config.class_count));
            const auto box = box_from_corners(cls, cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2);
            if (!box) continue;
            const double conf = keyed_stream(seed, frame, j, RngPurpose::FpConfidence)
                                    .uniform(config.fp_confidence_lo, config.fp_confidence_hi);
            out.push_back({*box, conf, frame_id});
        }
    }
    return out;
}

// --- backends ---------------------------------------------------------------

class DetectorBackend {
public:
    virtual ~DetectorBackend() = default;
    virtual std::vector<Detection> detect(const FrameRecord& frame) = 0;
    virtual std::string model_name() const = 0;
    virtual int input_width() const = 0;
    virtual int input_height() const = 0;
    virtual const std::vector<std::string>& class_names() const = 0;
};

/// Paces calls to at most `fps` per second by sleeping until the next slot.
class Throttle {
public:
    explicit Throttle(double fps = 0.0) : fps_(fps) {}

    void wait() {
        if (fps_ <= 0.0) return;
        using namespace std::chrono;
        const auto period = duration_cast<steady_clock::duration>(duration<double>(1.0 / fps_));
        const auto now = steady_clock::now();
        if (next_ > now) {
            std::this_thread::sleep_until(next_);
            next_ += period;
        } else {
            next_ = now + period;
        }
    }

    double fps() const noexcept { return fps_; }

private:
    double fps_;
    std::chrono::steady_clock::time_point next_{};
};

/// Test double for a trained network: perturbs the frame's ground truth.
class OracleBackend final : public DetectorBackend {
public:
    OracleBackend(OracleConfig config, std::vector<std::string> class_names, int input_w = 416, int input_h = 416,
                  double throttle_fps = 0.0)
        : config_(config), class_names_(std::move(class_names)), input_w_(input_w), input_h_(input_h),
          throttle_(throttle_fps) {
        config_.class_count = std::max<int>(1, static_cast<int>(class_names_.size()));
        config_.validate();
    }

    std::vector<Detection> detect(const FrameRecord& frame) override {
        throttle_.wait();
        if (!frame.truths) return {};
        return oracle_detect(*frame.truths, config_, frame.frame_id);
    }

    std::string model_name() const override { return "oracle"; }
    int input_width() const override { return input_w_; }
    int input_height() const override { return input_h_; }
    const std::vector<std::string>& class_names() const override { return class_names_; }
    const OracleConfig& config() const noexcept { return config_; }

private:
    OracleConfig config_;
    std::vector<std::string> class_names_;
    int input_w_;
    int input_h_;
    Throttle throttle_;
};

/// No-op backend: hands back the detections a replay source attached.
class PassthroughBackend final : public DetectorBackend {
public:
    explicit PassthroughBackend(std::vector<std::string> class_names = {}) : class_names_(std::move(class_names)) {}

    std::vector<Detection> detect(const FrameRecord& frame) override {
        return frame.recorded_detections.value_or(std::vector<Detection>{});
    }
    std::string model_name() const override { return "passthrough"; }
    int input_width() const override { return 0; }
    int input_height() const override { return 0; }
    const std::vector<std::string>& class_names() const override { return class_names_; }

private:
    std::vector<std::string> class_names_;
};

// --- model descriptors -----------------------------------------------------

class ModelNotFound : public Error {
public:
    using Error::Error;
};
class ClassListMismatch : public Error {
public:
    using Error::Error;
};
class UnsupportedBackend : public Error {
public:
    using Error::Error;
};

struct ModelDescriptor {
    std::string backend = "oracle"; // "oracle" | "passthrough" | "external"
    std::string model_path;
    std::vector<std::string> class_names;
    int input_width = 416;
    int input_height = 416;
    OracleConfig oracle;
    double throttle_fps = 0.0;
};

inline ModelDescriptor descriptor_from_json(const nlohmann::json& j) {
    ModelDescriptor d;
    d.backend = j.value("backend", std::string("oracle"));
    d.model_path = j.value("model_path", std::string());
    d.class_names = j.value("class_names", std::vector<std::string>{});
    d.input_width = j.value("input_width", 416);
    d.input_height = j.value("input_height", 416);
    d.throttle_fps = j.value("throttle_fps", 0.0);
    d.oracle.p_miss = j.value("p_miss", 0.0);
    d.oracle.jitter_sigma = j.value("jitter_sigma", 0.0);
    d.oracle.fp_rate = j.value("fp_rate", 0.0);
    if (j.contains("tp_confidence")) {
        const auto r = j.at("tp_confidence").get<std::vector<double>>();
        if (r.size() != 2) throw InvalidArgument("descriptor: tp_confidence must be [lo, hi]");
        d.oracle.tp_confidence_lo = r[0];
        d.oracle.tp_confidence_hi = r[1];
    }
    if (j.contains("fp_confidence")) {
        const auto r = j.at("fp_confidence").get<std::vector<double>>();
        if (r.size() != 2) throw InvalidArgument("descriptor: fp_confidence must be [lo, hi]");
        d.oracle.fp_confidence_lo = r[0];
        d.oracle.fp_confidence_hi = r[1];
    }
    d.oracle.seed = j.value("seed", std::uint64_t{0});
    d.oracle.class_count = std::max<int>(1, static_cast<int>(d.class_names.size()));
    return d;
}

inline nlohmann::json descriptor_to_json(const ModelDescriptor& d) {
    return {{"backend", d.backend},
            {"model_path", d.model_path},
            {"class_names", d.class_names},
            {"input_width", d.input_width},
            {"input_height", d.input_height},
            {"throttle_fps", d.throttle_fps},
            {"p_miss", d.oracle.p_miss},
            {"jitter_sigma", d.oracle.jitter_sigma},
            {"fp_rate", d.oracle.fp_rate},
            {"tp_confidence", {d.oracle.tp_confidence_lo, d.oracle.tp_confidence_hi}},
            {"fp_confidence", {d.oracle.fp_confidence_lo, d.oracle.fp_confidence_hi}},
            {"seed", d.oracle.seed}};
}

/// Builds a backend from a parsed descriptor. Every failure surfaces here,
/// never later at detect time. `base_dir` resolves a relative model_path.
inline std::unique_ptr<DetectorBackend> make_backend(const ModelDescriptor& d,
                                                     const std::vector<std::string>& dataset_classes,
                                                     const std::filesystem::path& base_dir = {}) {
    if (!dataset_classes.empty() && d.class_names != dataset_classes) {
        throw ClassListMismatch("ClassListMismatch: descriptor declares " + std::to_string(d.class_names.size()) +
                                " classes, dataset has " + std::to_string(dataset_classes.size()));
    }
    if (d.backend == "oracle") {
        return std::make_unique<OracleBackend>(d.oracle, d.class_names, d.input_width, d.input_height,
                                               d.throttle_fps);
    }
    if (d.backend == "passthrough") return std::make_unique<PassthroughBackend>(d.class_names);
    if (d.backend == "external") {
        std::filesystem::path model = d.model_path;
        if (model.is_relative() && !base_dir.empty()) model = base_dir / model;
        if (d.model_path.empty() || !std::filesystem::exists(model)) {
            throw ModelNotFound("ModelNotFound: " + model.string());
        }
        throw UnsupportedBackend("UnsupportedBackend: no neural-inference runtime is compiled into this build (model " +
                                 model.string() + ")");
    }
    throw UnsupportedBackend("UnsupportedBackend: unknown backend kind '" + d.backend + "'");
}

inline ModelDescriptor load_model_descriptor(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ModelNotFound("ModelNotFound: descriptor " + path.string());
    try {
        return descriptor_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("invalid model descriptor " + path.string() + ": " + e.what());
    }
}

/// Loads a descriptor file and builds its backend.
inline std::unique_ptr<DetectorBackend> load_external_backend(const std::filesystem::path& descriptor_path,
                                                              const std::vector<std::string>& dataset_classes) {
    const auto d = load_model_descriptor(descriptor_path);
    return make_backend(d, dataset_classes, descriptor_path.parent_path());
}

} // namespace rtdet
