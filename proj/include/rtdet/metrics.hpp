#pragma once

// Detection metrics: IoU, greedy confidence-ordered matching, precision/recall
// curves, all-point interpolated AP and mAP over IoU thresholds.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rtdet/annotation.hpp"
#include "rtdet/error.hpp"

namespace rtdet {

struct Detection {
    BoundingBox box;
    double confidence = 0.0;
    std::optional<std::int64_t> frame_id;

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Intersection over union in corner geometry. 0 for disjoint boxes.
/// Areas are taken from the same corner differences as the intersection so
/// identical boxes give exactly 1.
inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
    const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
    const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double area_a = (a.x_max() - a.x_min()) * (a.y_max() - a.y_min());
    const double area_b = (b.x_max() - b.x_min()) * (b.y_max() - b.y_min());
    const double uni = area_a + area_b - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

/// Indices of `dets` by descending confidence, ties by ascending index.
inline std::vector<std::size_t> confidence_order(std::span<const Detection> dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
    return order;
}

struct MatchPair {
    std::size_t detection = 0;
    std::size_t truth = 0;
    double iou = 0.0;
};

struct MatchResult {
    std::vector<MatchPair> pairs;                   // in confidence order of the detection
    std::vector<std::size_t> unmatched_detections;  // false positives, ascending index
    std::vector<std::size_t> unmatched_truths;      // false negatives, ascending index
};

/// Greedy one-to-one matching. In confidence order each detection takes the
/// still-free same-class truth with the highest IoU >= iou_threshold
/// (lowest truth index on ties).
inline MatchResult match_detections(std::span<const Detection> detections, std::span<const BoundingBox> truths,
                                    double iou_threshold) {
    MatchResult r;
    std::vector<bool> truth_taken(truths.size(), false);
    std::vector<bool> det_matched(detections.size(), false);
    for (std::size_t d : confidence_order(detections)) {
        const auto& det = detections[d];
        double best = -1.0;
        std::size_t best_t = 0;
        for (std::size_t t = 0; t < truths.size(); ++t) {
            if (truth_taken[t] || truths[t].class_id != det.box.class_id) continue;
            const double v = iou(det.box, truths[t]);
            if (v >= iou_threshold && v > best) {
                best = v;
                best_t = t;
            }
        }
        if (best >= 0.0) {
            truth_taken[best_t] = true;
            det_matched[d] = true;
            r.pairs.push_back({d, best_t, best});
        }
    }
    for (std::size_t d = 0; d < detections.size(); ++d) {
        if (!det_matched[d]) r.unmatched_detections.push_back(d);
    }
    for (std::size_t t = 0; t < truths.size(); ++t) {
        if (!truth_taken[t]) r.unmatched_truths.push_back(t);
    }
    return r;
}

struct PrPoint {
    double recall = 0.0;
    double precision = 0.0;
};

/// Detections keyed by image id. std::map keeps images in lexicographic order,
/// which fixes every reduction order below.
using ImageDetections = std::map<std::string, std::vector<Detection>>;
using ImageTruths = std::map<std::string, std::vector<BoundingBox>>;

inline ImageTruths truths_of(const Dataset& ds) {
    ImageTruths out;
    for (const auto& a : ds.annotations) out[a.image_id] = a.boxes;
    return out;
}

class UnknownImage : public Error {
public:
    explicit UnknownImage(const std::string& id) : Error("UnknownImage: detections reference image '" + id + "'"), id_(id) {}
    const std::string& image_id() const noexcept { return id_; }

private:
    std::string id_;
};

namespace detail {

struct RankedDetection {
    double confidence;
    const std::string* image_id;
    std::size_t index;
    bool true_positive;
};

/// Per-image greedy matching, then pooling of one class's detections by
/// descending confidence with ties on (image id, input index).
inline std::vector<RankedDetection> rank_class(const ImageDetections& dets, const ImageTruths& truths,
                                               double iou_threshold, int class_id) {
    std::vector<RankedDetection> ranked;
    for (const auto& [image_id, image_dets] : dets) {
        const auto it = truths.find(image_id);
        if (it == truths.end()) throw UnknownImage(image_id);
        const auto match = match_detections(image_dets, it->second, iou_threshold);
        std::vector<bool> tp(image_dets.size(), false);
        for (const auto& p : match.pairs) tp[p.detection] = true;
        for (std::size_t i = 0; i < image_dets.size(); ++i) {
            if (image_dets[i].box.class_id == class_id) {
                ranked.push_back({image_dets[i].confidence, &image_id, i, tp[i]});
            }
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedDetection& a, const RankedDetection& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (*a.image_id != *b.image_id) return *a.image_id < *b.image_id;
        return a.index < b.index;
    });
    return ranked;
}

inline std::size_t count_truths(const ImageTruths& truths, int class_id) {
    std::size_t g = 0;
    for (const auto& [id, boxes] : truths) {
        g += static_cast<std::size_t>(
            std::count_if(boxes.begin(), boxes.end(), [&](const BoundingBox& b) { return b.class_id == class_id; }));
    }
    return g;
}

} // namespace detail

/// One (recall, precision) point per ranked detection of `class_id`.
/// Empty when the class has no ground truth.
inline std::vector<PrPoint> precision_recall_curve(const ImageDetections& dets, const ImageTruths& truths,
                                                   double iou_threshold, int class_id) {
    const std::size_t g = detail::count_truths(truths, class_id);
    if (g == 0) {
        // still validate image ids
        for (const auto& [id, _] : dets) {
            if (!truths.contains(id)) throw UnknownImage(id);
        }
        return {};
    }
    const auto ranked = detail::rank_class(dets, truths, iou_threshold, class_id);
    std::vector<PrPoint> curve;
    curve.reserve(ranked.size());
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const auto& r : ranked) {
        (r.true_positive ? tp : fp) += 1;
        curve.push_back({static_cast<double>(tp) / static_cast<double>(g),
                         static_cast<double>(tp) / static_cast<double>(tp + fp)});
    }
    return curve;
}

/// All-point interpolation: sum over unique recall levels r_i of
/// (r_i - r_{i-1}) * max precision at recall >= r_i, with r_0 = 0.
///
/// Consecutive recall steps sharing one envelope value are summed as a single
/// width, so a perfect curve yields exactly 1.
inline double average_precision(std::span<const PrPoint> curve) {
    if (curve.empty()) return 0.0;
    // Suffix maximum of precision.
    std::vector<double> envelope(curve.size());
    double running = 0.0;
    for (std::size_t i = curve.size(); i-- > 0;) {
        running = std::max(running, curve[i].precision);
        envelope[i] = running;
    }
    double ap = 0.0;
    double segment_start = 0.0; // recall where the current envelope run began
    double segment_end = 0.0;
    double segment_value = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (!(curve[i].recall > segment_end)) continue;
        if (envelope[i] != segment_value) {
            ap += (segment_end - segment_start) * segment_value;
            segment_start = segment_end;
            segment_value = envelope[i];
        }
        segment_end = curve[i].recall;
    }
    ap += (segment_end - segment_start) * segment_value;
    return std::clamp(ap, 0.0, 1.0);
}

struct ConfusionSummary {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double average_iou = 0.0;
};

/// Sums a corpus of per-image match results; average IoU over TP pairs.
inline ConfusionSummary confusion_summary(std::span<const MatchResult> results) {
    ConfusionSummary s;
    double iou_sum = 0.0;
    for (const auto& r : results) {
        s.tp += r.pairs.size();
        s.fp += r.unmatched_detections.size();
        s.fn += r.unmatched_truths.size();
        for (const auto& p : r.pairs) iou_sum += p.iou;
    }
    s.average_iou = s.tp == 0 ? 0.0 : iou_sum / static_cast<double>(s.tp);
    return s;
}

struct EvalReport {
    std::vector<std::string> class_names;
    std::vector<double> iou_thresholds;
    /// per_class_ap[class][threshold index]
    std::vector<std::vector<double>> per_class_ap;
    /// Ground-truth boxes per class. Classes with zero are left out of mAP.
    std::vector<std::size_t> truth_counts;
    /// Mean AP per threshold index.
    std::vector<double> map;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double average_iou = 0.0;
    double confidence_threshold = 0.25;
    std::optional<double> fps;

    std::optional<double> map_at(double threshold) const {
        for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
            if (std::abs(iou_thresholds[i] - threshold) < 1e-12) return map[i];
        }
        return std::nullopt;
    }
};

inline constexpr double kDefaultConfidenceThreshold = 0.25;

/// Full evaluation. AP uses every detection; TP/FP/FN and average IoU use
/// detections with confidence >= confidence_threshold matched at the first
/// listed IoU threshold.
inline EvalReport evaluate(const ImageDetections& dets, const Dataset& ds, std::vector<double> iou_thresholds,
                           double confidence_threshold = kDefaultConfidenceThreshold) {
    if (iou_thresholds.empty()) throw InvalidArgument("evaluate: at least one IoU threshold is required");
    const ImageTruths truths = truths_of(ds);
    for (const auto& [id, _] : dets) {
        if (!truths.contains(id)) throw UnknownImage(id);
    }

    EvalReport rep;
    rep.class_names = ds.class_names;
    rep.iou_thresholds = std::move(iou_thresholds);
    rep.confidence_threshold = confidence_threshold;
    const std::size_t n_classes = ds.class_names.size();
    rep.per_class_ap.assign(n_classes, std::vector<double>(rep.iou_thresholds.size(), 0.0));
    rep.truth_counts.resize(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) rep.truth_counts[c] = detail::count_truths(truths, static_cast<int>(c));

    for (std::size_t t = 0; t < rep.iou_thresholds.size(); ++t) {
        double sum = 0.0;
        std::size_t counted = 0;
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (rep.truth_counts[c] == 0) continue;
            const auto curve = precision_recall_curve(dets, truths, rep.iou_thresholds[t], static_cast<int>(c));
            rep.per_class_ap[c][t] = average_precision(curve);
            sum += rep.per_class_ap[c][t];
            ++counted;
        }
        rep.map.push_back(counted == 0 ? 0.0 : sum / static_cast<double>(counted));
    }

    std::vector<MatchResult> matches;
    matches.reserve(truths.size());
    for (const auto& [id, boxes] : truths) {
        std::vector<Detection> kept;
        if (const auto it = dets.find(id); it != dets.end()) {
            for (const auto& d : it->second) {
                if (d.confidence >= confidence_threshold) kept.push_back(d);
            }
        }
        matches.push_back(match_detections(kept, boxes, rep.iou_thresholds.front()));
    }
    const auto summary = confusion_summary(matches);
    rep.tp = summary.tp;
    rep.fp = summary.fp;
    rep.fn = summary.fn;
    rep.average_iou = summary.average_iou;
    return rep;
}

} // namespace rtdet
