#pragma once

// Newline-delimited JSON messages exchanged with console clients.
//
//   client -> server  {"cmd": "start"|"stop"|"record_on"|"record_off"}
//   server -> client  {"type":"frame",...} {"type":"alert",...} {"type":"state",...}
//                     {"type":"error",...}

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtdet/metrics.hpp"
#include "rtdet/tracking.hpp"

namespace rtdet {

enum class Status { Idle, Running, Stopped };
enum class Command { Start, Stop, RecordOn, RecordOff };

inline const char* to_string(Status s) {
    switch (s) {
    case Status::Idle: return "idle";
    case Status::Running: return "running";
    case Status::Stopped: return "stopped";
    }
    return "?";
}

inline const char* to_string(Command c) {
    switch (c) {
    case Command::Start: return "start";
    case Command::Stop: return "stop";
    case Command::RecordOn: return "record_on";
    case Command::RecordOff: return "record_off";
    }
    return "?";
}

inline std::optional<Command> parse_command_name(std::string_view s) {
    if (s == "start") return Command::Start;
    if (s == "stop") return Command::Stop;
    if (s == "record_on") return Command::RecordOn;
    if (s == "record_off") return Command::RecordOff;
    return std::nullopt;
}

/// Parses one client line; nullopt for anything that is not a known command.
inline std::optional<Command> parse_client_message(std::string_view line) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("cmd") || !j["cmd"].is_string()) return std::nullopt;
    return parse_command_name(j["cmd"].get<std::string>());
}

inline nlohmann::json detection_to_json(const Detection& d) {
    return {{"class", d.box.class_id}, {"cx", d.box.cx}, {"cy", d.box.cy},
            {"w", d.box.w},            {"h", d.box.h},   {"conf", d.confidence}};
}

inline Detection detection_from_json(const nlohmann::json& j) {
    Detection d;
    d.box.class_id = j.at("class").get<int>();
    d.box.cx = j.at("cx").get<double>();
    d.box.cy = j.at("cy").get<double>();
    d.box.w = j.at("w").get<double>();
    d.box.h = j.at("h").get<double>();
    d.confidence = j.at("conf").get<double>();
    return d;
}

inline nlohmann::json box_to_json(const BoundingBox& b) {
    return {{"class", b.class_id}, {"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}};
}

inline BoundingBox box_from_json(const nlohmann::json& j) {
    return {j.at("class").get<int>(), j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("w").get<double>(),
            j.at("h").get<double>()};
}

inline std::string class_key(int class_id, const std::vector<std::string>& names) {
    if (class_id >= 0 && static_cast<std::size_t>(class_id) < names.size()) return names[class_id];
    return std::to_string(class_id);
}

/// Counts keyed by class name; every known class is present, zero included.
inline nlohmann::json counts_to_json(const ClassCounts& counts, const std::vector<std::string>& names) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t c = 0; c < names.size(); ++c) j[names[c]] = 0;
    for (const auto& [cls, n] : counts) j[class_key(cls, names)] = n;
    return j;
}

struct FrameMessage {
    std::int64_t session_id = 0;
    std::int64_t frame_id = 0;
    std::vector<Detection> detections;
    ClassCounts counts_visible;
    ClassCounts counts_total;
    std::size_t total_visible = 0;
    std::size_t total_cumulative = 0;
    double fps = 0.0;
    int width = 0;
    int height = 0;
    Status status = Status::Running;
    bool recording = false;
};

inline nlohmann::json frame_message(const FrameMessage& m, const std::vector<std::string>& names) {
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : m.detections) dets.push_back(detection_to_json(d));
    return {{"type", "frame"},
            {"session", m.session_id},
            {"frame_id", m.frame_id},
            {"detections", dets},
            {"counts_visible", counts_to_json(m.counts_visible, names)},
            {"counts_total", counts_to_json(m.counts_total, names)},
            {"total_visible", m.total_visible},
            {"total_cumulative", m.total_cumulative},
            {"fps", m.fps},
            {"resolution", {m.width, m.height}},
            {"status", to_string(m.status)},
            {"recording", m.recording}};
}

inline nlohmann::json alert_message(std::int64_t frame_id, const std::string& rule) {
    return {{"type", "alert"}, {"frame_id", frame_id}, {"rule", rule}};
}

inline nlohmann::json error_message(const std::string& error, const std::string& detail) {
    return {{"type", "error"}, {"error", error}, {"detail", detail}};
}

} // namespace rtdet
