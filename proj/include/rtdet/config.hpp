#pragma once

// Run configuration file (JSON) and frame-source construction.

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtdet/detection.hpp"
#include "rtdet/opencv_source.hpp"
#include "rtdet/source.hpp"
#include "rtdet/tracking.hpp"

namespace rtdet {

inline constexpr std::size_t kDefaultQueueCapacity = 4;

struct RunConfig {
    nlohmann::json source = nlohmann::json::object();
    std::string backend; // descriptor path
    double conf_threshold = kDefaultConfidenceThreshold;
    double nms_threshold = kDefaultNmsThreshold;
    TrackerParams tracker;
    /// Raw rule objects; classes are resolved against the backend's class list.
    nlohmann::json alert_rules = nlohmann::json::array();
    std::filesystem::path output_dir = "run";
    std::size_t queue_capacity = kDefaultQueueCapacity;
    bool record = false;
    std::vector<double> eval_iou_thresholds{0.5, 0.75};
    std::string network;
    /// Server mode: seconds to wait for a new start after a stop.
    double idle_exit_seconds = 10.0;
    /// Directory of the config file; relative paths resolve against it.
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
};

inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    RunConfig c;
    c.base_dir = base_dir;
    c.source = j.at("source");
    c.backend = j.at("backend").get<std::string>();
    c.conf_threshold = j.value("conf_threshold", kDefaultConfidenceThreshold);
    c.nms_threshold = j.value("nms_threshold", kDefaultNmsThreshold);
    if (j.contains("tracker")) {
        const auto& t = j.at("tracker");
        c.tracker.assoc_iou_threshold = t.value("assoc_iou_threshold", c.tracker.assoc_iou_threshold);
        c.tracker.confirm_hits = t.value("confirm_hits", c.tracker.confirm_hits);
        c.tracker.max_misses = t.value("max_misses", c.tracker.max_misses);
    }
    c.alert_rules = j.value("alert_rules", nlohmann::json::array());
    c.output_dir = j.value("output_dir", std::string("run"));
    c.queue_capacity = j.value("queue_capacity", kDefaultQueueCapacity);
    c.record = j.value("record", false);
    c.eval_iou_thresholds = j.value("eval_iou_thresholds", std::vector<double>{0.5, 0.75});
    c.network = j.value("network", std::string());
    c.idle_exit_seconds = j.value("idle_exit_seconds", 10.0);
    return c;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    return {{"source", c.source},
            {"backend", c.backend},
            {"conf_threshold", c.conf_threshold},
            {"nms_threshold", c.nms_threshold},
            {"tracker",
             {{"assoc_iou_threshold", c.tracker.assoc_iou_threshold},
              {"confirm_hits", c.tracker.confirm_hits},
              {"max_misses", c.tracker.max_misses}}},
            {"alert_rules", c.alert_rules},
            {"output_dir", c.output_dir.string()},
            {"queue_capacity", c.queue_capacity},
            {"record", c.record},
            {"eval_iou_thresholds", c.eval_iou_thresholds},
            {"network", c.network},
            {"idle_exit_seconds", c.idle_exit_seconds}};
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    try {
        return run_config_from_json(nlohmann::json::parse(in), path.parent_path());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("invalid config " + path.string() + ": " + e.what());
    }
}

/// Rule objects: {"id": "...", "class": "tank" | 1 | "any", "op": ">=" | "=", "threshold": n}
inline std::vector<AlertRule> resolve_alert_rules(const nlohmann::json& rules,
                                                  const std::vector<std::string>& class_names) {
    std::vector<AlertRule> out;
    for (const auto& r : rules) {
        AlertRule a;
        a.rule_id = r.at("id").get<std::string>();
        const auto& cls = r.value("class", nlohmann::json("any"));
        if (cls.is_number_integer()) {
            a.class_id = cls.get<int>();
        } else {
            const auto name = cls.get<std::string>();
            if (name != "any") {
                const auto it = std::find(class_names.begin(), class_names.end(), name);
                if (it == class_names.end()) throw InvalidArgument("alert rule '" + a.rule_id + "': unknown class " + name);
                a.class_id = static_cast<int>(it - class_names.begin());
            }
        }
        const auto op = r.value("op", std::string(">="));
        if (op == ">=") {
            a.comparator = Comparator::AtLeast;
        } else if (op == "=" || op == "==") {
            a.comparator = Comparator::Equal;
        } else {
            throw InvalidArgument("alert rule '" + a.rule_id + "': unknown comparator " + op);
        }
        const auto threshold = r.at("threshold").get<long long>();
        if (threshold < 0) throw InvalidArgument("alert rule '" + a.rule_id + "': threshold must be >= 0");
        a.threshold = static_cast<std::size_t>(threshold);
        out.push_back(std::move(a));
    }
    return out;
}

/// Source descriptor objects:
///   {"type":"synthetic", ...scene...}
///   {"type":"images", "path": dir, "fps": 0}
///   {"type":"recording", "path": file.rtrec, "speed": 1}
///   {"type":"replay", "path": artifact dir or detections.log, "speed": 1}
///   {"type":"video", "path": file, "speed": 1}      (OpenCV builds)
///   {"type":"camera", "device": 0}                  (OpenCV builds)
inline std::unique_ptr<FrameSource> make_source(const nlohmann::json& desc, const std::filesystem::path& base_dir,
                                                int class_count) {
    const auto type = desc.value("type", std::string());
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path = p;
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    try {
        if (type == "synthetic") {
            if (desc.contains("scene_file")) {
                std::ifstream in(resolve(desc.at("scene_file").get<std::string>()));
                if (!in) throw SourceUnavailable("SourceUnavailable: scene file " + desc.at("scene_file").get<std::string>());
                return std::make_unique<SyntheticSource>(scene_from_json(nlohmann::json::parse(in)));
            }
            return std::make_unique<SyntheticSource>(scene_from_json(desc));
        }
        if (type == "images") {
            return std::make_unique<ImageSequenceSource>(resolve(desc.at("path").get<std::string>()), class_count,
                                                         desc.value("fps", 0.0));
        }
        if (type == "recording") {
            const auto path = resolve(desc.at("path").get<std::string>());
            if (!std::filesystem::exists(path)) throw SourceUnavailable("SourceUnavailable: recording " + path.string());
            return std::make_unique<RecordingSource>(path, desc.value("speed", 0.0));
        }
        if (type == "replay") {
            auto path = resolve(desc.at("path").get<std::string>());
            if (std::filesystem::is_directory(path)) path /= "detections.log";
            if (!std::filesystem::exists(path)) throw SourceUnavailable("SourceUnavailable: replay log " + path.string());
            return std::make_unique<LogReplaySource>(path, desc.value("speed", 0.0));
        }
#ifdef RTDET_HAVE_OPENCV
        if (type == "video") {
            return std::make_unique<VideoCaptureSource>(resolve(desc.at("path").get<std::string>()).string(),
                                                        desc.value("speed", 1.0));
        }
        if (type == "camera") return std::make_unique<VideoCaptureSource>(desc.value("device", 0));
#else
        if (type == "video" || type == "camera") {
            throw SourceUnavailable("SourceUnavailable: " + type + " sources need a build with OpenCV");
        }
#endif
    } catch (const nlohmann::json::exception& e) {
        throw SourceUnavailable(std::string("SourceUnavailable: bad source descriptor: ") + e.what());
    }
    throw SourceUnavailable("SourceUnavailable: unknown source type '" + type + "'");
}

} // namespace rtdet
