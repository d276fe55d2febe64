#pragma once

// Frame sources: scripted synthetic scenes, labelled image sequences,
// recordings, detection-log replays and (with OpenCV) video files / cameras.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtdet/frame.hpp"
#include "rtdet/random.hpp"
#include "rtdet/recording.hpp"

namespace rtdet {

class SourceUnavailable : public Error {
public:
    using Error::Error;
};

class FrameSource {
public:
    virtual ~FrameSource() = default;
    /// Next frame, nullopt at end of stream. May block to pace the stream.
    virtual std::optional<FrameRecord> next() = 0;
    /// Live sources produce frames on their own clock; the pipeline drops
    /// frames for them instead of applying back-pressure.
    virtual bool live() const = 0;
    virtual std::string describe() const = 0;
};

inline std::int64_t steady_ns() {
    using namespace std::chrono;
    return duration_cast<nanoseconds>(steady_clock::now().time_since_epoch()).count();
}

/// Sleeps so that media timestamps play back at `speed` x real time.
/// speed <= 0 disables pacing.
class Pacer {
public:
    explicit Pacer(double speed) : speed_(speed) {}

    void wait(std::int64_t media_ns) {
        if (speed_ <= 0.0) return;
        const auto now = std::chrono::steady_clock::now();
        if (!base_media_) {
            base_media_ = media_ns;
            base_wall_ = now;
            return;
        }
        const auto offset = std::chrono::nanoseconds(
            static_cast<std::int64_t>(static_cast<double>(media_ns - *base_media_) / speed_));
        std::this_thread::sleep_until(base_wall_ + offset);
    }

    double speed() const noexcept { return speed_; }

private:
    double speed_;
    std::optional<std::int64_t> base_media_;
    std::chrono::steady_clock::time_point base_wall_{};
};

// --- synthetic scenes --------------------------------------------------------

struct SceneObject {
    int class_id = 0;
    std::int64_t start = 0;
    std::int64_t end = 0; // inclusive
    double cx = 0.5;
    double cy = 0.5;
    double w = 0.1;
    double h = 0.1;
    double vx = 0.0; // per frame
    double vy = 0.0;
    /// Inclusive frame ranges in which the object is hidden.
    std::vector<std::pair<std::int64_t, std::int64_t>> dropouts;
};

struct SceneSpec {
    std::int64_t frames = 0;
    /// Pacing rate; 0 emits frames as fast as they are pulled.
    double fps = 0.0;
    int width = 640;
    int height = 480;
    bool render_pixels = false;
    std::vector<SceneObject> objects;
};

inline constexpr double kNominalFps = 30.0;

/// Visible boxes at `frame`, in object order. Objects drifting fully out of
/// view are absent.
inline std::vector<BoundingBox> scene_truths(const SceneSpec& scene, std::int64_t frame) {
    std::vector<BoundingBox> out;
    for (const auto& o : scene.objects) {
        if (frame < o.start || frame > o.end) continue;
        const bool hidden = std::any_of(o.dropouts.begin(), o.dropouts.end(),
                                        [&](const auto& r) { return frame >= r.first && frame <= r.second; });
        if (hidden) continue;
        const double t = static_cast<double>(frame - o.start);
        const double cx = o.cx + o.vx * t;
        const double cy = o.cy + o.vy * t;
        if (auto b = box_from_corners(o.class_id, cx - o.w / 2, cy - o.h / 2, cx + o.w / 2, cy + o.h / 2)) {
            out.push_back(*b);
        }
    }
    return out;
}

inline PixelImage render_scene_frame(int width, int height, std::span<const BoundingBox> boxes) {
    PixelImage img(width, height, 80);
    for (const auto& b : boxes) {
        const std::array<std::uint8_t, 3> color = b.class_id == 0   ? std::array<std::uint8_t, 3>{40, 160, 40}
                                                  : b.class_id == 1 ? std::array<std::uint8_t, 3>{170, 60, 40}
                                                                    : std::array<std::uint8_t, 3>{60, 60, 170};
        fill_rect(img, static_cast<int>(b.x_min() * width), static_cast<int>(b.y_min() * height),
                  static_cast<int>(b.x_max() * width), static_cast<int>(b.y_max() * height), color);
    }
    return img;
}

/// Seeded scene of `n_objects` non-overlapping objects, each placed in its own
/// cell of a 4x4 grid, slowly drifting, with hidden stretches of at most
/// `max_dropout` frames. Every object is visible for its first `lead_in`
/// frames so it can be confirmed.
inline SceneSpec random_scene(std::uint64_t seed, int n_objects, std::int64_t frames, int max_dropout,
                              int lead_in = 3, int n_classes = 2) {
    if (n_objects > 16) throw InvalidArgument("random_scene: at most 16 objects");
    if (frames < 4 * lead_in + 2) throw InvalidArgument("random_scene: too few frames");
    KeyedStream rng(seed, {static_cast<std::uint64_t>(RngPurpose::Scene)});
    std::vector<int> cells(16);
    for (int i = 0; i < 16; ++i) cells[i] = i;
    for (int i = 15; i > 0; --i) std::swap(cells[i], cells[rng.next_u64() % static_cast<std::uint64_t>(i + 1)]);

    SceneSpec s;
    s.frames = frames;
    for (int k = 0; k < n_objects; ++k) {
        SceneObject o;
        o.class_id = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n_classes));
        const int cell = cells[k];
        o.w = rng.uniform(0.08, 0.14);
        o.h = rng.uniform(0.08, 0.14);
        o.cx = 0.125 + 0.25 * (cell % 4) + rng.uniform(-0.02, 0.02);
        o.cy = 0.125 + 0.25 * (cell / 4) + rng.uniform(-0.02, 0.02);
        o.vx = rng.uniform(-0.0002, 0.0002);
        o.vy = rng.uniform(-0.0002, 0.0002);
        o.start = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(frames / 2));
        const std::int64_t min_end = o.start + 2 * lead_in;
        o.end = min_end + static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(frames - min_end));
        // Hidden stretches after the lead-in, separated by visible frames.
        std::int64_t f = o.start + lead_in;
        while (max_dropout > 0 && f < o.end) {
            f += 1 + static_cast<std::int64_t>(rng.next_u64() % 15);
            const std::int64_t len = 1 + static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(max_dropout));
            if (f + len >= o.end) break;
            o.dropouts.emplace_back(f, f + len - 1);
            f += len + 1;
        }
        s.objects.push_back(std::move(o));
    }
    return s;
}

inline nlohmann::json scene_to_json(const SceneSpec& s) {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : s.objects) {
        nlohmann::json d = nlohmann::json::array();
        for (const auto& [a, b] : o.dropouts) d.push_back({a, b});
        objs.push_back({{"class", o.class_id}, {"start", o.start}, {"end", o.end}, {"cx", o.cx}, {"cy", o.cy},
                        {"w", o.w}, {"h", o.h}, {"vx", o.vx}, {"vy", o.vy}, {"dropouts", d}});
    }
    return {{"type", "synthetic"}, {"frames", s.frames},          {"fps", s.fps},       {"width", s.width},
            {"height", s.height},  {"pixels", s.render_pixels}, {"objects", objs}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
    SceneSpec s;
    s.frames = j.at("frames").get<std::int64_t>();
    s.fps = j.value("fps", 0.0);
    s.width = j.value("width", 640);
    s.height = j.value("height", 480);
    s.render_pixels = j.value("pixels", false);
    if (j.contains("random")) {
        const auto& r = j.at("random");
        auto gen = random_scene(r.value("seed", std::uint64_t{0}), r.at("objects").get<int>(), s.frames,
                                r.value("max_dropout", 0), r.value("lead_in", 3), r.value("classes", 2));
        s.objects = std::move(gen.objects);
    }
    for (const auto& o : j.value("objects", nlohmann::json::array())) {
        SceneObject so;
        so.class_id = o.at("class").get<int>();
        so.start = o.value("start", std::int64_t{0});
        so.end = o.value("end", s.frames - 1);
        so.cx = o.at("cx").get<double>();
        so.cy = o.at("cy").get<double>();
        so.w = o.at("w").get<double>();
        so.h = o.at("h").get<double>();
        so.vx = o.value("vx", 0.0);
        so.vy = o.value("vy", 0.0);
        for (const auto& d : o.value("dropouts", nlohmann::json::array())) {
            so.dropouts.emplace_back(d.at(0).get<std::int64_t>(), d.at(1).get<std::int64_t>());
        }
        s.objects.push_back(std::move(so));
    }
    return s;
}

/// Distinct objects that are visible somewhere in the scene.
inline std::size_t scene_object_count(const SceneSpec& s) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < s.objects.size(); ++k) {
        SceneSpec single = s;
        single.objects = {s.objects[k]};
        for (std::int64_t f = s.objects[k].start; f <= std::min(s.objects[k].end, s.frames - 1); ++f) {
            if (!scene_truths(single, f).empty()) {
                ++n;
                break;
            }
        }
    }
    return n;
}

class SyntheticSource final : public FrameSource {
public:
    explicit SyntheticSource(SceneSpec scene) : scene_(std::move(scene)) {}

    std::optional<FrameRecord> next() override {
        if (next_ >= scene_.frames) return std::nullopt;
        const std::int64_t id = next_++;
        FrameRecord f;
        f.frame_id = id;
        if (scene_.fps > 0.0) {
            const auto period = std::chrono::duration<double>(1.0 / scene_.fps);
            if (id == 0) start_ = std::chrono::steady_clock::now();
            std::this_thread::sleep_until(start_ + std::chrono::duration_cast<std::chrono::nanoseconds>(period * id));
            f.timestamp_ns = steady_ns();
        } else {
            f.timestamp_ns = static_cast<std::int64_t>(static_cast<double>(id) * 1e9 / kNominalFps);
        }
        f.width = scene_.width;
        f.height = scene_.height;
        auto truths = scene_truths(scene_, id);
        if (scene_.render_pixels) {
            f.pixels = std::make_shared<const PixelImage>(render_scene_frame(scene_.width, scene_.height, truths));
        }
        f.truths = std::move(truths);
        return f;
    }

    bool live() const override { return scene_.fps > 0.0; }
    std::string describe() const override { return "synthetic(" + std::to_string(scene_.frames) + " frames)"; }
    const SceneSpec& scene() const noexcept { return scene_; }

private:
    SceneSpec scene_;
    std::int64_t next_ = 0;
    std::chrono::steady_clock::time_point start_{};
};

// --- image sequences ----------------------------------------------------------

/// Images of a directory in file-name order; `<stem>.txt` labels become
/// ground truth. PPM files are decoded, other formats are metadata-only.
class ImageSequenceSource final : public FrameSource {
public:
    ImageSequenceSource(const std::filesystem::path& dir, int class_count, double fps = 0.0)
        : dir_(dir), class_count_(class_count), fps_(fps) {
        std::error_code ec;
        if (!std::filesystem::is_directory(dir, ec)) {
            throw SourceUnavailable("SourceUnavailable: image directory " + dir.string());
        }
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            if (e.is_regular_file() && is_image_extension(e.path())) files_.push_back(e.path());
        }
        std::sort(files_.begin(), files_.end());
    }

    std::optional<FrameRecord> next() override {
        if (index_ >= files_.size()) return std::nullopt;
        const auto& path = files_[index_];
        FrameRecord f;
        f.frame_id = static_cast<std::int64_t>(index_++);
        f.timestamp_ns = static_cast<std::int64_t>(static_cast<double>(f.frame_id) * 1e9 /
                                                   (fps_ > 0.0 ? fps_ : kNominalFps));
        pacer_.wait(f.timestamp_ns);
        const auto bytes = read_file_bytes(path);
        if (path.extension() == ".ppm") {
            auto img = std::make_shared<PixelImage>(decode_ppm(bytes));
            f.width = img->width;
            f.height = img->height;
            f.pixels = std::move(img);
        } else if (const auto size = sniff_image_size(bytes)) {
            f.width = size->width;
            f.height = size->height;
        }
        auto label = path;
        label.replace_extension(".txt");
        if (std::filesystem::exists(label)) f.truths = parse_label_file(read_text_file(label), class_count_);
        return f;
    }

    bool live() const override { return false; }
    std::string describe() const override { return "images(" + dir_.string() + ")"; }

private:
    std::filesystem::path dir_;
    int class_count_;
    double fps_;
    Pacer pacer_{fps_ > 0.0 ? 1.0 : 0.0};
    std::vector<std::filesystem::path> files_;
    std::size_t index_ = 0;
};

// --- replays ----------------------------------------------------------------

/// Frames of a recording; detections come from the sidecar log when present.
class RecordingSource final : public FrameSource {
public:
    RecordingSource(const std::filesystem::path& recording, double speed) : reader_(recording), pacer_(speed) {
        auto sidecar = recording;
        sidecar.replace_extension(".log");
        if (std::filesystem::exists(sidecar)) {
            for (auto& e : read_log_file(sidecar)) {
                if (!e.dropped) sidecar_.push_back(std::move(e));
            }
        }
        path_ = recording;
    }

    std::optional<FrameRecord> next() override {
        auto f = reader_.next();
        if (!f) return std::nullopt;
        if (!sidecar_.empty()) {
            if (index_ >= sidecar_.size() || sidecar_[index_].frame_id != f->frame_id) {
                throw CorruptArtifact("CorruptArtifact: sidecar log does not match recording at frame " +
                                      std::to_string(f->frame_id));
            }
            f->recorded_detections = sidecar_[index_].detections;
        }
        ++index_;
        pacer_.wait(f->timestamp_ns);
        return f;
    }

    bool live() const override { return false; }
    std::string describe() const override { return "recording(" + path_.string() + ")"; }

private:
    RecordingReader reader_;
    Pacer pacer_;
    std::vector<LogEntry> sidecar_;
    std::filesystem::path path_;
    std::size_t index_ = 0;
};

/// Metadata-only frames rebuilt from a detections.log.
class LogReplaySource final : public FrameSource {
public:
    LogReplaySource(const std::filesystem::path& log, double speed) : pacer_(speed), path_(log) {
        for (auto& e : read_log_file(log)) {
            if (!e.dropped) entries_.push_back(std::move(e));
        }
    }

    std::optional<FrameRecord> next() override {
        if (index_ >= entries_.size()) return std::nullopt;
        const auto& e = entries_[index_++];
        FrameRecord f;
        f.frame_id = e.frame_id;
        f.timestamp_ns = e.timestamp_ns;
        f.width = e.width;
        f.height = e.height;
        f.recorded_detections = e.detections;
        pacer_.wait(f.timestamp_ns);
        return f;
    }

    bool live() const override { return false; }
    std::string describe() const override { return "replay(" + path_.string() + ")"; }
    const std::vector<LogEntry>& entries() const noexcept { return entries_; }

private:
    Pacer pacer_;
    std::filesystem::path path_;
    std::vector<LogEntry> entries_;
    std::size_t index_ = 0;
};

} // namespace rtdet
