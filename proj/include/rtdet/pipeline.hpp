#pragma once

// Live pipeline: capture -> inference -> track/count/broadcast, three
// concurrently running stages joined by bounded FIFO queues.
//
// Live sources feed the inference stage through a drop-oldest queue; every
// evicted frame id rides along with the next queued frame so the final stage
// can log the drop in frame order. Offline sources use blocking hand-off.

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtdet/broadcast.hpp"
#include "rtdet/config.hpp"
#include "rtdet/detection.hpp"
#include "rtdet/fps.hpp"
#include "rtdet/queue.hpp"
#include "rtdet/recording.hpp"
#include "rtdet/report.hpp"
#include "rtdet/session.hpp"
#include "rtdet/source.hpp"
#include "rtdet/tracking.hpp"

namespace rtdet {

class BackendFailure : public Error {
public:
    using Error::Error;
};

enum class SessionEnd { EndOfStream, Stopped, Failed };

inline const char* to_string(SessionEnd e) {
    switch (e) {
    case SessionEnd::EndOfStream: return "completed";
    case SessionEnd::Stopped: return "stopped";
    case SessionEnd::Failed: return "failed";
    }
    return "?";
}

struct RecordingInfo {
    std::filesystem::path video;
    std::filesystem::path log;
    std::size_t frames = 0;
    bool failed = false;
};

/// Everything a session leaves behind; mirrored on disk in `dir`.
struct RunArtifact {
    std::filesystem::path dir;
    std::int64_t session_id = 0;
    nlohmann::json config_snapshot;
    std::vector<std::string> log_lines;
    std::vector<std::int64_t> processed_frames;
    std::vector<std::int64_t> dropped_frames;
    std::size_t frames_dispatched = 0;
    CountState counts;
    ClassCounts final_visible;
    std::optional<EvalReport> report;
    std::vector<RecordingInfo> recordings;
    double fps = 0.0;
    int width = 0;
    int height = 0;
    /// Dispatch-to-broadcast time per processed frame.
    std::vector<std::int64_t> latencies_ns;
    /// Time spent in backend.detect per processed frame.
    std::vector<std::int64_t> inference_ns;
    SessionEnd end = SessionEnd::EndOfStream;
    std::string failure;
    std::vector<std::string> events;
};

struct PipelineHooks {
    /// Called on the final stage after each processed frame.
    std::function<void(const FrameRecord&, const FrameCounts&)> on_frame;
};

inline constexpr const char* kArtifactConfig = "config.snapshot";
inline constexpr const char* kArtifactLog = "detections.log";
inline constexpr const char* kArtifactSummary = "artifact.json";
inline constexpr const char* kArtifactReportJson = "report.json";
inline constexpr const char* kArtifactReportText = "report.txt";
inline constexpr const char* kDiskFullRule = "recording_disk_full";

/// Image id used when evaluating a stream: frame ids zero-padded so that the
/// lexicographic order equals frame order.
inline std::string frame_image_id(std::int64_t frame_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%012lld", static_cast<long long>(frame_id));
    return buf;
}

/// Write-to-temp then rename, so readers never see a torn file.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& text) {
    auto tmp = p;
    tmp += ".tmp";
    write_text_file(tmp, text);
    std::filesystem::rename(tmp, p);
}

inline nlohmann::json artifact_summary(const RunArtifact& a, const std::vector<std::string>& names) {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : a.recordings) {
        recs.push_back({{"video", r.video.filename().string()},
                        {"log", r.log.filename().string()},
                        {"frames", r.frames},
                        {"failed", r.failed}});
    }
    nlohmann::json alerts = nlohmann::json::array();
    for (const auto& al : a.counts.alerts_fired) alerts.push_back({{"frame_id", al.frame_id}, {"rule", al.rule_id}});
    std::int64_t max_latency = 0;
    for (auto l : a.latencies_ns) max_latency = std::max(max_latency, l);
    return {{"session", a.session_id},
            {"status", to_string(a.end)},
            {"failure", a.failure},
            {"frames_dispatched", a.frames_dispatched},
            {"frames_processed", a.processed_frames.size()},
            {"frames_dropped", a.dropped_frames.size()},
            {"counts_total", counts_to_json(a.counts.per_class_count, names)},
            {"total", a.counts.total},
            {"counts_visible_final", counts_to_json(a.final_visible, names)},
            {"alerts", alerts},
            {"fps", a.fps},
            {"resolution", {a.width, a.height}},
            {"max_latency_ms", static_cast<double>(max_latency) * 1e-6},
            {"recording_format", kRecordingFormat},
            {"recordings", recs},
            {"events", a.events},
            {"has_report", a.report.has_value()}};
}

namespace detail {

struct Processed {
    FrameRecord frame;
    std::vector<Detection> detections;
    std::int64_t inference_ns = 0;
};

} // namespace detail

/// Runs one session until end of stream, a stop command, or a failure.
/// The controller must already be running. The artifact is written to
/// `out_dir` in every case; backend errors are rethrown as BackendFailure
/// after the partial artifact has been flushed.
inline RunArtifact run_session(FrameSource& source, DetectorBackend& backend, const RunConfig& config,
                               SessionController& controller, Broadcaster& broadcaster,
                               const std::filesystem::path& out_dir, const PipelineHooks& hooks = {}) {
    const auto start_snap = controller.snapshot();
    if (start_snap->status != Status::Running) throw InvalidArgument("run_session: session is not running");
    const std::int64_t sid = start_snap->session_id;
    const auto& names = backend.class_names();
    const auto rules = resolve_alert_rules(config.alert_rules, names);

    std::filesystem::create_directories(out_dir);
    RunArtifact art;
    art.dir = out_dir;
    art.session_id = sid;
    art.config_snapshot = run_config_to_json(config);
    art.config_snapshot["session"] = sid;
    art.config_snapshot["source_description"] = source.describe();
    art.config_snapshot["backend_model"] = backend.model_name();
    art.config_snapshot["class_names"] = names;
    write_file_atomic(out_dir / kArtifactConfig, art.config_snapshot.dump(2) + "\n");

    std::ofstream log(out_dir / kArtifactLog, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot create " + (out_dir / kArtifactLog).string());

    if (config.record && !start_snap->recording) {
        try {
            controller.handle_control(Command::RecordOn);
        } catch (const InvalidTransition&) {
        }
    }

    const auto policy = source.live() ? OverflowPolicy::DropOldest : OverflowPolicy::Block;
    BoundedQueue<FrameRecord> captured(config.queue_capacity, policy);
    BoundedQueue<detail::Processed> inferred(config.queue_capacity, OverflowPolicy::Block);
    std::atomic<bool> halt{false};
    std::atomic<std::size_t> dispatched{0};
    std::exception_ptr source_error;
    std::exception_ptr backend_error;

    std::thread capture([&] {
        try {
            while (!halt.load()) {
                const auto snap = controller.snapshot();
                if (snap->session_id != sid || snap->status != Status::Running) break;
                auto frame = source.next();
                if (!frame) break;
                const auto after = controller.snapshot();
                if (halt.load() || after->session_id != sid || after->status != Status::Running) break;
                frame->dispatched_ns = steady_ns();
                ++dispatched;
                captured.push(std::move(*frame), [](FrameRecord& evicted, FrameRecord& head) {
                    std::vector<std::int64_t> ids = std::move(evicted.dropped_before);
                    ids.push_back(evicted.frame_id);
                    ids.insert(ids.end(), head.dropped_before.begin(), head.dropped_before.end());
                    std::sort(ids.begin(), ids.end());
                    head.dropped_before = std::move(ids);
                });
            }
        } catch (...) {
            source_error = std::current_exception();
        }
        captured.close();
    });

    std::thread inference([&] {
        while (auto frame = captured.pop()) {
            if (backend_error) continue; // drain so the capture thread can exit
            try {
                const auto t0 = steady_ns();
                auto raw = backend.detect(*frame);
                const auto t1 = steady_ns();
                auto kept = nms(filter_by_confidence(raw, config.conf_threshold), config.nms_threshold);
                inferred.push(detail::Processed{std::move(*frame), std::move(kept), t1 - t0});
            } catch (...) {
                backend_error = std::current_exception();
                halt.store(true);
            }
        }
        inferred.close();
    });

    Tracker tracker(config.tracker, rules);
    FpsMeter fps;
    std::unique_ptr<RecordingWriter> recorder;
    std::optional<std::uint64_t> recorded_epoch;
    ImageDetections eval_dets;
    Dataset eval_truth;
    eval_truth.class_names = names;
    bool have_truth = false;

    auto close_recorder = [&] {
        if (!recorder) return;
        try {
            recorder->close();
        } catch (const DiskFull&) {
            art.recordings.back().failed = true;
        }
        art.recordings.back().frames = recorder->frames();
        recorder.reset();
    };
    auto write_log = [&](const std::string& line) {
        log << line << '\n';
        log.flush();
        art.log_lines.push_back(line);
    };

    while (auto item = inferred.pop()) {
        FrameRecord& frame = item->frame;
        for (auto id : frame.dropped_before) {
            LogEntry drop;
            drop.frame_id = id;
            drop.dropped = true;
            write_log(log_line(drop));
            art.dropped_frames.push_back(id);
        }

        auto counts = tracker.update(item->detections, frame.frame_id);
        fps.tick(steady_ns());
        art.processed_frames.push_back(frame.frame_id);
        art.inference_ns.push_back(item->inference_ns);
        art.width = frame.width;
        art.height = frame.height;

        LogEntry entry;
        entry.frame_id = frame.frame_id;
        entry.timestamp_ns = frame.timestamp_ns;
        entry.width = frame.width;
        entry.height = frame.height;
        entry.detections = item->detections;
        entry.counts_visible = counts_to_json(counts.visible, names);
        entry.counts_total = counts_to_json(tracker.counts().per_class_count, names);
        for (const auto& a : counts.alerts) entry.alerts.push_back(a.rule_id);
        const std::string line = log_line(entry);
        write_log(line);

        // Recording follows the controller's flag at frame granularity.
        const auto snap = controller.snapshot();
        const bool want_recording = snap->session_id == sid && snap->recording;
        if (recorder && (!want_recording || snap->recording_epoch != recorded_epoch)) close_recorder();
        if (want_recording && !recorder && snap->recording_epoch != recorded_epoch) {
            recorded_epoch = snap->recording_epoch;
            const auto k = art.recordings.size() + 1;
            const auto base = out_dir / (k == 1 ? std::string("recording") : "recording_" + std::to_string(k));
            try {
                recorder = std::make_unique<RecordingWriter>(base);
                art.recordings.push_back({recorder->video_path(), recorder->log_path(), 0, false});
            } catch (const Error& e) {
                art.events.push_back(std::string("recording failed to start: ") + e.what());
                controller.force_recording_off(sid);
            }
        }
        std::vector<FiredAlert> extra_alerts;
        if (recorder) {
            try {
                recorder->write_frame(frame, item->detections, line);
            } catch (const DiskFull& e) {
                art.recordings.back().failed = true;
                art.recordings.back().frames = recorder->frames();
                art.events.push_back(e.what());
                recorder.reset();
                controller.force_recording_off(sid);
                extra_alerts.push_back({frame.frame_id, kDiskFullRule});
            }
        }

        if (frame.truths) {
            have_truth = true;
            const auto id = frame_image_id(frame.frame_id);
            eval_truth.annotations.push_back({id, std::max(frame.width, 1), std::max(frame.height, 1), *frame.truths});
            eval_dets[id] = item->detections;
        }

        const auto broadcast_time = steady_ns();
        if (broadcaster.subscriber_count() > 0) {
            const auto status_snap = controller.snapshot();
            FrameMessage msg;
            msg.session_id = sid;
            msg.frame_id = frame.frame_id;
            msg.detections = item->detections;
            msg.counts_visible = counts.visible;
            msg.counts_total = tracker.counts().per_class_count;
            for (const auto& [c, n] : counts.visible) msg.total_visible += n;
            msg.total_cumulative = tracker.counts().total;
            msg.fps = fps.fps();
            msg.width = frame.width;
            msg.height = frame.height;
            msg.status = status_snap->session_id == sid ? status_snap->status : Status::Stopped;
            msg.recording = static_cast<bool>(recorder);
            broadcaster.publish(MessageKind::Frame, frame_message(msg, names));
            for (const auto& a : counts.alerts) broadcaster.publish(MessageKind::Alert, alert_message(a.frame_id, a.rule_id));
            for (const auto& a : extra_alerts) broadcaster.publish(MessageKind::Alert, alert_message(a.frame_id, a.rule_id));
        }
        art.latencies_ns.push_back(broadcast_time - frame.dispatched_ns);
        controller.publish_metrics(sid, fps.fps(), frame.width, frame.height, tracker.counts(), counts.visible);
        if (hooks.on_frame) hooks.on_frame(frame, counts);
    }
    capture.join();
    inference.join();
    close_recorder();
    log.close();

    art.frames_dispatched = dispatched.load();
    art.counts = tracker.counts();
    art.final_visible = tracker.visible_counts();
    art.fps = fps.fps();
    if (backend_error || source_error) {
        art.end = SessionEnd::Failed;
        try {
            std::rethrow_exception(backend_error ? backend_error : source_error);
        } catch (const std::exception& e) {
            art.failure = e.what();
        } catch (...) {
            art.failure = "unknown error";
        }
        controller.finish_session(sid);
    } else {
        const auto snap = controller.snapshot();
        if (snap->session_id == sid && snap->status == Status::Running) {
            art.end = SessionEnd::EndOfStream;
            controller.finish_session(sid);
        } else {
            art.end = SessionEnd::Stopped;
        }
    }

    if (have_truth && !config.eval_iou_thresholds.empty()) {
        art.report = evaluate(eval_dets, eval_truth, config.eval_iou_thresholds, config.conf_threshold);
        art.report->fps = art.fps;
        const auto network = config.network.empty() ? backend.model_name() : config.network;
        auto report_json = report_to_json(*art.report);
        report_json["network"] = network;
        write_file_atomic(out_dir / kArtifactReportJson, report_json.dump(2) + "\n");
        write_file_atomic(out_dir / kArtifactReportText, render_report_table(*art.report, network));
    }
    write_file_atomic(out_dir / kArtifactSummary, artifact_summary(art, names).dump(2) + "\n");

    if (backend_error) throw BackendFailure("BackendFailure: " + art.failure);
    if (source_error) std::rethrow_exception(source_error);
    return art;
}

} // namespace rtdet
