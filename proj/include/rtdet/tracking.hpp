#pragma once

// IoU-greedy frame-to-frame association, confirm-on-N-hits counting and
// latched count alerts.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rtdet/metrics.hpp"

namespace rtdet {

enum class TrackState { Tentative, Confirmed, Lost };

inline const char* to_string(TrackState s) {
    switch (s) {
    case TrackState::Tentative: return "tentative";
    case TrackState::Confirmed: return "confirmed";
    case TrackState::Lost: return "lost";
    }
    return "?";
}

struct Track {
    std::int64_t track_id = 0;
    int class_id = 0;
    BoundingBox last_box;
    TrackState state = TrackState::Tentative;
    int hits = 0;   // consecutive matches
    int misses = 0; // consecutive misses
    std::int64_t first_frame = 0;
    std::int64_t last_frame = 0; // last frame with a match
    bool counted = false;
};

struct TrackerParams {
    double assoc_iou_threshold = 0.3;
    int confirm_hits = 3;
    int max_misses = 10;
};

using ClassCounts = std::map<int, std::size_t>;

struct FiredAlert {
    std::int64_t frame_id = 0;
    std::string rule_id;

    friend bool operator==(const FiredAlert&, const FiredAlert&) = default;
};

/// Cumulative unique-object counts for one run.
struct CountState {
    ClassCounts per_class_count;
    std::size_t total = 0;
    std::vector<FiredAlert> alerts_fired;

    std::size_t count(int class_id) const {
        const auto it = per_class_count.find(class_id);
        return it == per_class_count.end() ? 0 : it->second;
    }
};

struct CountDelta {
    ClassCounts newly_counted;
    std::vector<std::int64_t> confirmed_tracks;
    std::vector<std::int64_t> lost_tracks;

    bool empty() const noexcept { return newly_counted.empty() && lost_tracks.empty(); }
};

class NonMonotonicFrame : public Error {
public:
    using Error::Error;
};

struct TrackUpdate {
    /// Live tracks plus any that turned Lost on this frame.
    std::vector<Track> tracks;
    CountDelta delta;
};

/// One association step. `next_track_id` is advanced for every new track.
inline TrackUpdate update_tracks(std::vector<Track> tracks, std::span<const Detection> detections,
                                 std::int64_t frame_id, const TrackerParams& params, std::int64_t& next_track_id) {
    for (const auto& t : tracks) {
        if (frame_id <= t.last_frame) {
            throw NonMonotonicFrame("NonMonotonicFrame: frame " + std::to_string(frame_id) + " after track " +
                                    std::to_string(t.track_id) + " last seen at " + std::to_string(t.last_frame));
        }
    }
    std::erase_if(tracks, [](const Track& t) { return t.state == TrackState::Lost; });
    std::sort(tracks.begin(), tracks.end(), [](const Track& a, const Track& b) { return a.track_id < b.track_id; });

    struct Candidate {
        double iou;
        std::size_t track;
        std::size_t detection;
    };
    std::vector<Candidate> candidates;
    for (std::size_t t = 0; t < tracks.size(); ++t) {
        for (std::size_t d = 0; d < detections.size(); ++d) {
            if (detections[d].box.class_id != tracks[t].class_id) continue;
            const double v = iou(tracks[t].last_box, detections[d].box);
            if (v >= params.assoc_iou_threshold) candidates.push_back({v, t, d});
        }
    }
    // Descending IoU; ties go to the older track, then the lower detection index.
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.track != b.track) return a.track < b.track;
        return a.detection < b.detection;
    });

    std::vector<bool> track_matched(tracks.size(), false);
    std::vector<bool> det_matched(detections.size(), false);
    TrackUpdate out;
    auto confirm_if_ready = [&](Track& t) {
        if (t.state == TrackState::Tentative && t.hits >= params.confirm_hits) {
            t.state = TrackState::Confirmed;
            out.delta.confirmed_tracks.push_back(t.track_id);
            if (!t.counted) {
                t.counted = true;
                ++out.delta.newly_counted[t.class_id];
            }
        }
    };
    for (const auto& c : candidates) {
        if (track_matched[c.track] || det_matched[c.detection]) continue;
        track_matched[c.track] = true;
        det_matched[c.detection] = true;
        Track& t = tracks[c.track];
        t.last_box = detections[c.detection].box;
        t.last_frame = frame_id;
        ++t.hits;
        t.misses = 0;
        confirm_if_ready(t);
    }
    for (std::size_t t = 0; t < tracks.size(); ++t) {
        if (track_matched[t]) continue;
        Track& tr = tracks[t];
        tr.hits = 0;
        if (++tr.misses >= params.max_misses) {
            tr.state = TrackState::Lost;
            out.delta.lost_tracks.push_back(tr.track_id);
        }
    }
    for (std::size_t d = 0; d < detections.size(); ++d) {
        if (det_matched[d]) continue;
        Track t;
        t.track_id = next_track_id++;
        t.class_id = detections[d].box.class_id;
        t.last_box = detections[d].box;
        t.hits = 1;
        t.first_frame = frame_id;
        t.last_frame = frame_id;
        confirm_if_ready(t);
        tracks.push_back(t);
    }
    out.tracks = std::move(tracks);
    return out;
}

enum class Comparator { AtLeast, Equal };

struct AlertRule {
    std::string rule_id;
    std::optional<int> class_id; // nullopt = any class (total)
    Comparator comparator = Comparator::AtLeast;
    std::size_t threshold = 0;
};

inline bool rule_holds(const AlertRule& r, const CountState& s) {
    const std::size_t v = r.class_id ? s.count(*r.class_id) : s.total;
    return r.comparator == Comparator::AtLeast ? v >= r.threshold : v == r.threshold;
}

/// Fires each rule at the first frame its predicate holds, at most once per
/// run. Fired alerts are appended to `state.alerts_fired` and returned.
inline std::vector<FiredAlert> evaluate_alert_rules(CountState& state, std::span<const AlertRule> rules,
                                                    std::int64_t frame_id) {
    std::vector<FiredAlert> fired;
    for (const auto& r : rules) {
        const bool already = std::any_of(state.alerts_fired.begin(), state.alerts_fired.end(),
                                         [&](const FiredAlert& a) { return a.rule_id == r.rule_id; });
        if (already || !rule_holds(r, state)) continue;
        fired.push_back({frame_id, r.rule_id});
        state.alerts_fired.push_back(fired.back());
    }
    return fired;
}

struct FrameCounts {
    CountDelta delta;
    std::vector<FiredAlert> alerts;
    ClassCounts visible;
};

/// Single-owner tracker for one run; feed frames in increasing order.
class Tracker {
public:
    explicit Tracker(TrackerParams params = {}, std::vector<AlertRule> rules = {})
        : params_(params), rules_(std::move(rules)) {
        if (params_.confirm_hits < 1) throw InvalidArgument("tracker: confirm_hits must be >= 1");
        if (params_.max_misses < 1) throw InvalidArgument("tracker: max_misses must be >= 1");
    }

    FrameCounts update(std::span<const Detection> detections, std::int64_t frame_id) {
        if (last_frame_ && frame_id <= *last_frame_) {
            throw NonMonotonicFrame("NonMonotonicFrame: frame " + std::to_string(frame_id) + " after " +
                                    std::to_string(*last_frame_));
        }
        last_frame_ = frame_id;
        auto upd = update_tracks(std::move(tracks_), detections, frame_id, params_, next_id_);
        tracks_ = std::move(upd.tracks);
        FrameCounts fc;
        for (const auto& [cls, n] : upd.delta.newly_counted) {
            counts_.per_class_count[cls] += n;
            counts_.total += n;
        }
        fc.delta = std::move(upd.delta);
        fc.alerts = evaluate_alert_rules(counts_, rules_, frame_id);
        fc.visible = visible_counts();
        return fc;
    }

    /// Confirmed tracks matched on the latest frame.
    ClassCounts visible_counts() const {
        ClassCounts v;
        for (const auto& t : tracks_) {
            if (t.state == TrackState::Confirmed && t.misses == 0) ++v[t.class_id];
        }
        return v;
    }

    const CountState& counts() const noexcept { return counts_; }
    const std::vector<Track>& tracks() const noexcept { return tracks_; }
    const TrackerParams& params() const noexcept { return params_; }
    const std::vector<AlertRule>& rules() const noexcept { return rules_; }

private:
    TrackerParams params_;
    std::vector<AlertRule> rules_;
    std::vector<Track> tracks_;
    CountState counts_;
    std::int64_t next_id_ = 1;
    std::optional<std::int64_t> last_frame_;
};

} // namespace rtdet
