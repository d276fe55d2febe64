#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "reference_evaluator.hpp"
#include "rtdet/rtdet.hpp"

namespace fixtures {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "rtdet") {
        std::string tmpl = (fs::temp_directory_path() / (tag + "_XXXXXX")).string();
        if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const noexcept { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

inline rtdet::BoundingBox box(int cls, double cx, double cy, double w, double h) { return {cls, cx, cy, w, h}; }

inline rtdet::Detection det(int cls, double cx, double cy, double w, double h, double conf) {
    return {box(cls, cx, cy, w, h), conf, std::nullopt};
}

/// Writes every annotation of `ds` as a small PPM plus its label file, and classes.txt.
inline void write_dataset(const rtdet::Dataset& ds, const fs::path& dir, int w = 24, int h = 16) {
    fs::create_directories(dir);
    rtdet::write_labels(ds, dir);
    for (const auto& a : ds.annotations) {
        rtdet::PixelImage img(a.image_width > 0 ? a.image_width : w, a.image_height > 0 ? a.image_height : h, 90);
        for (const auto& b : a.boxes) rtdet::draw_box_outline(img, b, rtdet::class_color(b.class_id));
        rtdet::write_ppm(dir / (a.image_id + ".ppm"), img);
    }
}

inline rtdet::ImageAnnotation annotation(const std::string& id, std::vector<rtdet::BoundingBox> boxes, int w = 24,
                                         int h = 16) {
    return {id, w, h, std::move(boxes)};
}

/// Seeded random evaluation corpus: up to 20 images with up to 10 boxes each
/// over 2 classes, and detections mixing jittered hits, duplicates, class
/// flips, clutter and tied confidences.
struct Corpus {
    rtdet::Dataset dataset;
    rtdet::ImageDetections detections;
};

inline Corpus random_corpus(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto chance = [&](double p) { return uni(0.0, 1.0) < p; };
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto confidence = [&] {
        if (chance(0.4)) return pick(1, 10) / 10.0; // ties across images
        return uni(0.01, 1.0);
    };
    auto jitter = [&](rtdet::BoundingBox b, double s) {
        const auto j = rtdet::box_from_corners(b.class_id, b.x_min() + uni(-s, s) * b.w, b.y_min() + uni(-s, s) * b.h,
                                               b.x_max() + uni(-s, s) * b.w, b.y_max() + uni(-s, s) * b.h);
        return j ? *j : b;
    };

    Corpus c;
    c.dataset.class_names = {"car", "tank"};
    const int n_images = pick(1, 20);
    for (int i = 0; i < n_images; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "img_%03d", pick(0, 999) * 100 + i);
        rtdet::ImageAnnotation a{id, 64, 48, {}};
        const int n_boxes = pick(0, 10);
        for (int k = 0; k < n_boxes; ++k) {
            const double w = uni(0.05, 0.35), h = uni(0.05, 0.35);
            const double cx = uni(w / 2, 1 - w / 2), cy = uni(h / 2, 1 - h / 2);
            a.boxes.push_back({pick(0, 1), cx, cy, w, h});
        }
        std::vector<rtdet::Detection> dets;
        for (const auto& t : a.boxes) {
            if (chance(0.8)) {
                auto b = jitter(t, 0.25);
                if (chance(0.1)) b.class_id = 1 - b.class_id;
                dets.push_back({b, confidence(), std::nullopt});
            }
            if (chance(0.2)) dets.push_back({jitter(t, 0.3), confidence(), std::nullopt});
        }
        const int clutter = pick(0, 3);
        for (int k = 0; k < clutter; ++k) {
            const double w = uni(0.05, 0.3), h = uni(0.05, 0.3);
            dets.push_back({{pick(0, 1), uni(w / 2, 1 - w / 2), uni(h / 2, 1 - h / 2), w, h}, confidence(), std::nullopt});
        }
        std::shuffle(dets.begin(), dets.end(), rng);
        if (!dets.empty() || chance(0.5)) c.detections[a.image_id] = std::move(dets);
        c.dataset.annotations.push_back(std::move(a));
    }
    return c;
}

inline std::vector<ref::Image> to_reference(const rtdet::Dataset& ds, const rtdet::ImageDetections& dets) {
    auto conv = [](const rtdet::BoundingBox& b) { return ref::Box{b.class_id, b.cx, b.cy, b.w, b.h}; };
    std::vector<ref::Image> out;
    for (const auto& a : ds.annotations) {
        ref::Image im;
        im.id = a.image_id;
        for (const auto& b : a.boxes) im.truths.push_back(conv(b));
        if (const auto it = dets.find(a.image_id); it != dets.end()) {
            for (const auto& d : it->second) im.dets.push_back({conv(d.box), d.confidence});
        }
        out.push_back(std::move(im));
    }
    return out;
}

/// Largest absolute difference between a library report and the reference,
/// over AP, mAP, counts and average IoU. Counts contribute their raw difference.
inline double report_distance(const rtdet::EvalReport& a, const ref::Result& b) {
    double d = 0;
    for (std::size_t c = 0; c < b.ap.size(); ++c) {
        for (std::size_t t = 0; t < b.ap[c].size(); ++t) d = std::max(d, std::abs(a.per_class_ap[c][t] - b.ap[c][t]));
        d = std::max(d, std::abs(double(a.truth_counts[c]) - double(b.truth_counts[c])));
    }
    for (std::size_t t = 0; t < b.map.size(); ++t) d = std::max(d, std::abs(a.map[t] - b.map[t]));
    d = std::max(d, std::abs(double(a.tp) - double(b.tp)));
    d = std::max(d, std::abs(double(a.fp) - double(b.fp)));
    d = std::max(d, std::abs(double(a.fn) - double(b.fn)));
    d = std::max(d, std::abs(a.average_iou - b.avg_iou));
    return d;
}

/// Scene with the given objects, `frames` long, no pacing.
inline rtdet::SceneSpec scene(std::int64_t frames, std::vector<rtdet::SceneObject> objects) {
    rtdet::SceneSpec s;
    s.frames = frames;
    s.objects = std::move(objects);
    return s;
}

inline rtdet::SceneObject object(int cls, double cx, double cy, double w = 0.1, double h = 0.1, double vx = 0,
                                 double vy = 0) {
    rtdet::SceneObject o;
    o.class_id = cls;
    o.start = 0;
    o.end = std::numeric_limits<std::int64_t>::max() / 2;
    o.cx = cx;
    o.cy = cy;
    o.w = w;
    o.h = h;
    o.vx = vx;
    o.vy = vy;
    return o;
}

inline rtdet::OracleBackend degenerate_oracle(std::vector<std::string> names = {"car", "tank"},
                                              double throttle_fps = 0.0) {
    rtdet::OracleConfig cfg;
    cfg.seed = 7;
    return rtdet::OracleBackend(cfg, std::move(names), 416, 416, throttle_fps);
}

/// Counts each scene object would produce if the tracker recovered its
/// identity: objects that are visible for at least `confirm_hits` consecutive
/// frames somewhere in the scene.
inline std::map<int, std::size_t> expected_counts(const rtdet::SceneSpec& s, int confirm_hits) {
    std::map<int, std::size_t> out;
    for (const auto& o : s.objects) {
        rtdet::SceneSpec single = s;
        single.objects = {o};
        int run = 0;
        bool confirmed = false;
        for (std::int64_t f = 0; f < s.frames && !confirmed; ++f) {
            run = rtdet::scene_truths(single, f).empty() ? 0 : run + 1;
            confirmed = run >= confirm_hits;
        }
        if (confirmed) ++out[o.class_id];
    }
    return out;
}

/// Feeds a scene's exact truths (as conf-1 detections) through a tracker.
inline rtdet::Tracker track_scene(const rtdet::SceneSpec& s, rtdet::TrackerParams params = {},
                                  std::vector<rtdet::AlertRule> rules = {}) {
    rtdet::Tracker tr(params, std::move(rules));
    for (std::int64_t f = 0; f < s.frames; ++f) {
        std::vector<rtdet::Detection> dets;
        for (const auto& b : rtdet::scene_truths(s, f)) dets.push_back({b, 1.0, f});
        tr.update(dets, f);
    }
    return tr;
}

/// Polls `pred` every 10 ms for up to `limit`.
template <class Pred>
bool wait_until(Pred&& pred, std::chrono::milliseconds limit = std::chrono::milliseconds(3000)) {
    const auto deadline = std::chrono::steady_clock::now() + limit;
    while (!pred()) {
        if (std::chrono::steady_clock::now() > deadline) return false;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return true;
}

} // namespace fixtures
