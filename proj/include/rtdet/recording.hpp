#pragma once

// Detection log lines and the session recording container.
//
// Recording container ("rtrec", version 1):
//
//   RTREC 1\n
//   { frame header JSON }\n  [width*height*3 raw RGB bytes when "pixels" is true]
//   ...
//   END <frame count>\n
//
// Frames carry their detection overlays baked into the pixels. A sidecar
// `<name>.log` holds the detection-log lines of the recorded frames. A file
// without the END trailer, or with a wrong count, is corrupt.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtdet/frame.hpp"
#include "rtdet/protocol.hpp"

namespace rtdet {

inline constexpr const char* kRecordingMagic = "RTREC 1";
inline constexpr const char* kRecordingFormat = "rtrec-1: JSON frame headers + raw RGB24 rasters, lossless";

class CorruptArtifact : public Error {
public:
    using Error::Error;
};

class DiskFull : public Error {
public:
    using Error::Error;
};

/// One processed (or dropped) frame in detections.log.
struct LogEntry {
    std::int64_t frame_id = 0;
    bool dropped = false;
    std::int64_t timestamp_ns = 0;
    int width = 0;
    int height = 0;
    std::vector<Detection> detections;
    nlohmann::json counts_visible = nlohmann::json::object();
    nlohmann::json counts_total = nlohmann::json::object();
    std::vector<std::string> alerts;
};

inline std::string log_line(const LogEntry& e) {
    nlohmann::json j;
    j["frame_id"] = e.frame_id;
    if (e.dropped) {
        j["dropped"] = true;
        return j.dump();
    }
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : e.detections) dets.push_back(detection_to_json(d));
    j["timestamp_ns"] = e.timestamp_ns;
    j["resolution"] = {e.width, e.height};
    j["detections"] = dets;
    j["counts_visible"] = e.counts_visible;
    j["counts_total"] = e.counts_total;
    j["alerts"] = e.alerts;
    return j.dump();
}

/// Parses one detections.log line. `line_no` is only used in the error text.
inline LogEntry parse_log_line(const std::string& line, std::size_t line_no) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    auto bad = [&](const std::string& why) {
        return CorruptArtifact("CorruptArtifact: detections.log line " + std::to_string(line_no) + ": " + why);
    };
    if (j.is_discarded() || !j.is_object()) throw bad("not a JSON object");
    try {
        LogEntry e;
        e.frame_id = j.at("frame_id").get<std::int64_t>();
        e.dropped = j.value("dropped", false);
        if (e.dropped) return e;
        e.timestamp_ns = j.at("timestamp_ns").get<std::int64_t>();
        const auto res = j.at("resolution");
        e.width = res.at(0).get<int>();
        e.height = res.at(1).get<int>();
        for (const auto& d : j.at("detections")) e.detections.push_back(detection_from_json(d));
        e.counts_visible = j.at("counts_visible");
        e.counts_total = j.at("counts_total");
        e.alerts = j.at("alerts").get<std::vector<std::string>>();
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw bad(ex.what());
    }
}

/// Reads a whole log; a final line without '\n' is a torn write and corrupt.
inline std::vector<LogEntry> read_log_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw CorruptArtifact("CorruptArtifact: cannot open " + p.string());
    const std::string text(std::istreambuf_iterator<char>(in), {});
    std::vector<LogEntry> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        ++line_no;
        if (end == std::string::npos) {
            throw CorruptArtifact("CorruptArtifact: " + p.filename().string() + " line " + std::to_string(line_no) +
                                  " is truncated");
        }
        out.push_back(parse_log_line(text.substr(pos, end - pos), line_no));
        pos = end + 1;
    }
    return out;
}

inline std::array<std::uint8_t, 3> class_color(int class_id) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 6> kPalette{
        {{0, 200, 0}, {220, 0, 0}, {0, 90, 255}, {240, 200, 0}, {200, 0, 200}, {0, 200, 200}}};
    return kPalette[static_cast<std::size_t>(class_id < 0 ? 0 : class_id) % kPalette.size()];
}

inline PixelImage with_overlays(const PixelImage& img, std::span<const Detection> dets) {
    PixelImage out = img;
    for (const auto& d : dets) draw_box_outline(out, d.box, class_color(d.box.class_id));
    return out;
}

class RecordingWriter {
public:
    /// Opens `<base>.rtrec` and `<base>.log`.
    explicit RecordingWriter(const std::filesystem::path& base)
        : RecordingWriter(base.string() + ".rtrec", base.string() + ".log") {}

    /// Explicit file paths, mainly for tests (e.g. /dev/full).
    RecordingWriter(const std::filesystem::path& video, const std::filesystem::path& log)
        : video_path_(video), log_path_(log) {
        video_.open(video_path_, std::ios::binary | std::ios::trunc);
        log_.open(log_path_, std::ios::binary | std::ios::trunc);
        if (!video_ || !log_) throw IoError("cannot create recording " + video_path_.string());
        video_ << kRecordingMagic << '\n';
        check();
    }

    RecordingWriter(const RecordingWriter&) = delete;
    RecordingWriter& operator=(const RecordingWriter&) = delete;
    ~RecordingWriter() {
        try {
            close();
        } catch (...) {
        }
    }

    /// Throws DiskFull when the bytes cannot be written.
    void write_frame(const FrameRecord& frame, std::span<const Detection> dets, const std::string& log_text) {
        nlohmann::json h;
        h["frame_id"] = frame.frame_id;
        h["timestamp_ns"] = frame.timestamp_ns;
        h["width"] = frame.width;
        h["height"] = frame.height;
        h["pixels"] = static_cast<bool>(frame.pixels);
        if (frame.truths) {
            nlohmann::json t = nlohmann::json::array();
            for (const auto& b : *frame.truths) t.push_back(box_to_json(b));
            h["truths"] = t;
        } else {
            h["truths"] = nullptr;
        }
        video_ << h.dump() << '\n';
        if (frame.pixels) {
            const auto overlaid = with_overlays(*frame.pixels, dets);
            video_.write(reinterpret_cast<const char*>(overlaid.data.data()),
                         static_cast<std::streamsize>(overlaid.data.size()));
        }
        log_ << log_text << '\n';
        check();
        ++frames_;
    }

    void close() {
        if (closed_) return;
        closed_ = true;
        video_ << "END " << frames_ << '\n';
        video_.flush();
        log_.flush();
        const bool ok = static_cast<bool>(video_) && static_cast<bool>(log_);
        video_.close();
        log_.close();
        if (!ok) throw DiskFull("DiskFull: could not finalize " + video_path_.string());
    }

    std::size_t frames() const noexcept { return frames_; }
    const std::filesystem::path& video_path() const noexcept { return video_path_; }
    const std::filesystem::path& log_path() const noexcept { return log_path_; }

private:
    void check() {
        video_.flush();
        log_.flush();
        if (!video_ || !log_) throw DiskFull("DiskFull: write to " + video_path_.string() + " failed");
    }

    std::filesystem::path video_path_;
    std::filesystem::path log_path_;
    std::ofstream video_;
    std::ofstream log_;
    std::size_t frames_ = 0;
    bool closed_ = false;
};

/// Sequential reader of a recording container.
class RecordingReader {
public:
    explicit RecordingReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw CorruptArtifact("CorruptArtifact: cannot open recording " + path.string());
        std::string magic;
        std::getline(in_, magic);
        if (magic != kRecordingMagic) throw CorruptArtifact("CorruptArtifact: bad magic in " + path.string());
    }

    /// Next frame, or nullopt at the END trailer.
    std::optional<FrameRecord> next() {
        if (done_) return std::nullopt;
        std::string line;
        if (!std::getline(in_, line) || in_.eof()) {
            throw CorruptArtifact("CorruptArtifact: " + path_.string() + " is truncated after frame " +
                                  std::to_string(count_));
        }
        if (line.rfind("END ", 0) == 0) {
            done_ = true;
            if (std::stoull(line.substr(4)) != count_) {
                throw CorruptArtifact("CorruptArtifact: " + path_.string() + " frame count mismatch");
            }
            return std::nullopt;
        }
        const auto h = nlohmann::json::parse(line, nullptr, false);
        if (h.is_discarded()) throw CorruptArtifact("CorruptArtifact: bad frame header in " + path_.string());
        FrameRecord f;
        try {
            f.frame_id = h.at("frame_id").get<std::int64_t>();
            f.timestamp_ns = h.at("timestamp_ns").get<std::int64_t>();
            f.width = h.at("width").get<int>();
            f.height = h.at("height").get<int>();
            if (!h.at("truths").is_null()) {
                std::vector<BoundingBox> t;
                for (const auto& b : h.at("truths")) t.push_back(box_from_json(b));
                f.truths = std::move(t);
            }
            if (h.at("pixels").get<bool>()) {
                auto img = std::make_shared<PixelImage>(f.width, f.height);
                in_.read(reinterpret_cast<char*>(img->data.data()), static_cast<std::streamsize>(img->data.size()));
                if (in_.gcount() != static_cast<std::streamsize>(img->data.size())) {
                    throw CorruptArtifact("CorruptArtifact: truncated raster in " + path_.string());
                }
                f.pixels = std::move(img);
            }
        } catch (const nlohmann::json::exception& e) {
            throw CorruptArtifact(std::string("CorruptArtifact: bad frame header: ") + e.what());
        }
        ++count_;
        return f;
    }

    std::size_t frames_read() const noexcept { return count_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::size_t count_ = 0;
    bool done_ = false;
};

/// Counts frames of a recording, validating the whole file.
inline std::size_t count_recording_frames(const std::filesystem::path& path) {
    RecordingReader r(path);
    while (r.next()) {
    }
    return r.frames_read();
}

} // namespace rtdet
