#pragma once

// EvalReport serialization (JSON document) and human-readable tables.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtdet/metrics.hpp"

namespace rtdet {

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::string format_percent(double ratio, int decimals) { return format_fixed(ratio * 100.0, decimals) + "%"; }

/// Threshold key as used in reports: two decimals ("0.50", "0.75").
inline std::string threshold_key(double t) { return format_fixed(t, 2); }

inline std::string class_label(const EvalReport& r, std::size_t c) {
    return c < r.class_names.size() && !r.class_names[c].empty() ? r.class_names[c] : std::to_string(c);
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < r.per_class_ap.size(); ++c) {
        nlohmann::json row = nlohmann::json::object();
        for (std::size_t t = 0; t < r.iou_thresholds.size(); ++t) {
            if (r.truth_counts[c] == 0) {
                row[threshold_key(r.iou_thresholds[t])] = nullptr;
            } else {
                row[threshold_key(r.iou_thresholds[t])] = r.per_class_ap[c][t];
            }
        }
        per_class[class_label(r, c)] = row;
    }
    nlohmann::json map = nlohmann::json::object();
    for (std::size_t t = 0; t < r.iou_thresholds.size(); ++t) map[threshold_key(r.iou_thresholds[t])] = r.map[t];
    j["class_names"] = r.class_names;
    j["iou_thresholds"] = r.iou_thresholds;
    j["truth_counts"] = r.truth_counts;
    j["per_class_ap"] = per_class;
    j["map"] = map;
    j["tp"] = r.tp;
    j["fp"] = r.fp;
    j["fn"] = r.fn;
    j["avg_iou"] = r.average_iou;
    j["confidence_threshold"] = r.confidence_threshold;
    j["fps"] = r.fps ? nlohmann::json(*r.fps) : nlohmann::json(nullptr);
    j["map_excludes"] = "classes with zero ground-truth boxes";
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.iou_thresholds = j.at("iou_thresholds").get<std::vector<double>>();
    r.truth_counts = j.at("truth_counts").get<std::vector<std::size_t>>();
    r.per_class_ap.assign(r.class_names.size(), std::vector<double>(r.iou_thresholds.size(), 0.0));
    for (std::size_t c = 0; c < r.class_names.size(); ++c) {
        const auto& row = j.at("per_class_ap").at(class_label(r, c));
        for (std::size_t t = 0; t < r.iou_thresholds.size(); ++t) {
            const auto& v = row.at(threshold_key(r.iou_thresholds[t]));
            r.per_class_ap[c][t] = v.is_null() ? 0.0 : v.get<double>();
        }
    }
    for (double t : r.iou_thresholds) r.map.push_back(j.at("map").at(threshold_key(t)).get<double>());
    r.tp = j.at("tp").get<std::size_t>();
    r.fp = j.at("fp").get<std::size_t>();
    r.fn = j.at("fn").get<std::size_t>();
    r.average_iou = j.at("avg_iou").get<double>();
    r.confidence_threshold = j.value("confidence_threshold", kDefaultConfidenceThreshold);
    if (j.contains("fps") && !j.at("fps").is_null()) r.fps = j.at("fps").get<double>();
    return r;
}

namespace detail {

inline std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

} // namespace detail

/// Confusion line in the form "TP=1734 FN=201 avgIoU=67.21% FP=0".
inline std::string render_confusion_line(std::size_t tp, std::size_t fp, std::size_t fn, double average_iou) {
    return "TP=" + std::to_string(tp) + " FN=" + std::to_string(fn) + " avgIoU=" + format_percent(average_iou, 2) +
           " FP=" + std::to_string(fp);
}

/// Network / mAP@t... / FPS table row plus the detail block underneath.
inline std::string render_report_table(const EvalReport& r, const std::string& network = "detector") {
    std::ostringstream os;
    constexpr std::size_t kName = 24;
    constexpr std::size_t kCol = 12;
    os << detail::pad("Network", kName);
    for (double t : r.iou_thresholds) os << detail::pad("mAP@" + threshold_key(t), kCol);
    os << "FPS\n";
    os << detail::pad(network, kName);
    for (double m : r.map) os << detail::pad(format_percent(m, 1), kCol);
    os << (r.fps ? format_fixed(*r.fps, 1) : std::string("-")) << "\n\n";

    os << "confidence threshold " << format_fixed(r.confidence_threshold, 2) << ": "
       << render_confusion_line(r.tp, r.fp, r.fn, r.average_iou) << "\n";
    for (std::size_t t = 0; t < r.iou_thresholds.size(); ++t) {
        os << "mAP@" << threshold_key(r.iou_thresholds[t]) << " = " << format_fixed(r.map[t], 6) << " ("
           << format_percent(r.map[t], 1) << ")\n";
    }
    for (std::size_t t = 0; t < r.iou_thresholds.size(); ++t) {
        os << "AP@" << threshold_key(r.iou_thresholds[t]) << ":";
        for (std::size_t c = 0; c < r.per_class_ap.size(); ++c) {
            os << "  " << class_label(r, c) << " ";
            os << (r.truth_counts[c] == 0 ? std::string("n/a") : format_percent(r.per_class_ap[c][t], 2));
        }
        os << "\n";
    }
    return os.str();
}

struct SummaryRow {
    std::string network;
    double map = 0.0;
    std::optional<double> fps;
};

/// Multi-model comparison with the columns Network, mAP, FPS.
inline std::string render_summary_table(const std::vector<SummaryRow>& rows) {
    std::ostringstream os;
    os << detail::pad("Network", 24) << detail::pad("mAP", 12) << "FPS\n";
    for (const auto& row : rows) {
        os << detail::pad(row.network, 24) << detail::pad(format_percent(row.map, 1), 12)
           << (row.fps ? format_fixed(*row.fps, 1) : std::string("-")) << "\n";
    }
    return os.str();
}

} // namespace rtdet
