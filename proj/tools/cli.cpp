#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rtdet/augment.hpp"
#include "rtdet/config.hpp"
#include "rtdet/dataset_io.hpp"
#include "rtdet/image_file.hpp"
#include "rtdet/pipeline.hpp"
#include "rtdet/server.hpp"

namespace rtdet::cli {
namespace fs = std::filesystem;

namespace {

DatasetPaths dataset_paths(const DatasetOptions& d) { return {d.dataset, d.labels, d.classes}; }

std::string join(const std::vector<std::string>& v, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
}

std::uint64_t require_seed(const Options& o, const char* command) {
    if (!o.seed) throw InvalidArgument(std::string(command) + " needs an explicit --seed");
    return *o.seed;
}

// --- validate ---------------------------------------------------------------

void print_validation(const LoadedDataset& loaded, const ValidationReport& r, std::ostream& out) {
    const auto& ds = loaded.dataset;
    out << "images: " << ds.annotations.size() << "  label files: " << loaded.label_files.size()
        << "  classes: " << join(ds.class_names, ", ") << "\n";
    out << "per-class boxes:";
    for (std::size_t c = 0; c < r.per_class_counts.size(); ++c) {
        out << " " << (c < ds.class_names.size() ? ds.class_names[c] : std::to_string(c)) << "="
            << r.per_class_counts[c];
    }
    out << "\nimbalance ratio: " << format_fixed(r.imbalance_ratio, 2) << "\n";
    out << "findings: " << r.finding_count() + loaded.problems.size() << "\n";
    for (const auto& id : r.missing_labels) out << "  MissingLabel(" << id << ")\n";
    for (const auto& id : r.orphan_labels) out << "  OrphanLabel(" << id << ")\n";
    for (const auto& id : r.duplicate_ids) out << "  DuplicateImageId(" << id << ")\n";
    for (const auto& id : r.bad_class_images) out << "  ClassOutOfRange(" << id << ")\n";
    for (const auto& p : loaded.problems) out << "  " << p << "\n";
}

nlohmann::json validation_json(const LoadedDataset& loaded, const ValidationReport& r) {
    return {{"images", loaded.dataset.annotations.size()},
            {"class_names", loaded.dataset.class_names},
            {"missing_labels", r.missing_labels},
            {"orphan_labels", r.orphan_labels},
            {"duplicate_ids", r.duplicate_ids},
            {"bad_class_images", r.bad_class_images},
            {"problems", loaded.problems},
            {"per_class_counts", r.per_class_counts},
            {"imbalance_ratio", std::isfinite(r.imbalance_ratio) ? nlohmann::json(r.imbalance_ratio) : nlohmann::json(nullptr)},
            {"findings", r.finding_count() + loaded.problems.size()}};
}

int cmd_validate(const Options& o, std::ostream& out) {
    const auto loaded = load_dataset(dataset_paths(o.data));
    const auto report = validate_dataset(loaded.dataset, loaded.label_files);
    print_validation(loaded, report, out);
    if (!o.validate_json.empty()) write_text_file(o.validate_json, validation_json(loaded, report).dump(2) + "\n");
    return report.finding_count() + loaded.problems.size() == 0 ? kOk : kFindings;
}

// --- split ------------------------------------------------------------------

int cmd_split(const Options& o, std::ostream& out) {
    const auto seed = require_seed(o, "split");
    auto ds = split_dataset(load_dataset_strict(dataset_paths(o.data)), o.test_fraction, seed);
    std::string train, test;
    for (const auto& [id, split] : ds.split_assignment) (split == Split::Test ? test : train) += id + "\n";
    fs::create_directories(o.out);
    write_text_file(fs::path(o.out) / "train.txt", train);
    write_text_file(fs::path(o.out) / "test.txt", test);
    const auto n_test = static_cast<std::size_t>(std::count(test.begin(), test.end(), '\n'));
    out << "train: " << ds.annotations.size() - n_test << "  test: " << n_test << "  -> " << o.out << "\n";
    return kOk;
}

// --- augment ----------------------------------------------------------------

fs::path image_path(const fs::path& dir, const std::string& id) {
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().stem() == id && is_image_extension(e.path())) return e.path();
    }
    throw IoError("image file for '" + id + "' not found in " + dir.string());
}

int cmd_augment(const Options& o, std::ostream& out) {
    AugmentationSpec spec;
    spec.seed = require_seed(o, "augment");
    spec.horizontal_flip = o.flip;
    spec.brightness_delta = o.brightness;
    spec.gaussian_noise_sigma = o.noise;
    spec.crop_fraction = o.crop;
    spec.validate();

    const fs::path src_dir = o.data.dataset;
    Dataset ds = load_dataset_strict(dataset_paths(o.data));
    nlohmann::json removed = nlohmann::json::array();

    // Preprocessing over the originals in id order.
    if (o.dedupe_threshold || o.sharpness_threshold) {
        std::vector<PixelImage> pixels;
        pixels.reserve(ds.annotations.size());
        for (const auto& a : ds.annotations) pixels.push_back(load_image(image_path(src_dir, a.image_id)));
        std::vector<bool> keep(ds.annotations.size(), true);
        if (o.dedupe_threshold && !pixels.empty()) {
            std::fill(keep.begin(), keep.end(), false);
            for (auto i : dedupe_frames(pixels, *o.dedupe_threshold)) keep[i] = true;
            for (std::size_t i = 0; i < keep.size(); ++i) {
                if (!keep[i]) removed.push_back({{"image", ds.annotations[i].image_id}, {"reason", "duplicate"}});
            }
        }
        if (o.sharpness_threshold) {
            for (std::size_t i = 0; i < keep.size(); ++i) {
                if (!keep[i]) continue;
                const auto verdict = reject_blurry(pixels[i], *o.sharpness_threshold);
                if (!verdict.keep) {
                    keep[i] = false;
                    removed.push_back({{"image", ds.annotations[i].image_id},
                                       {"reason", "blurry"},
                                       {"sharpness", verdict.sharpness}});
                }
            }
        }
        std::vector<ImageAnnotation> kept;
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (keep[i]) kept.push_back(std::move(ds.annotations[i]));
        }
        ds.annotations = std::move(kept);
    }

    const auto res = balance_dataset(ds, spec, o.target_ratio);
    const fs::path out_dir = o.out;
    fs::create_directories(out_dir);
    write_text_file(out_dir / "classes.txt", emit_class_names(res.dataset.class_names));

    std::map<std::string, std::string> source_of;
    for (const auto& [src, copies] : res.manifest) {
        for (const auto& c : copies) source_of[c] = src;
    }
    for (const auto& a : res.dataset.annotations) {
        write_text_file(out_dir / (a.image_id + ".txt"), emit_label_file(a.boxes));
        const auto it = source_of.find(a.image_id);
        if (it == source_of.end()) {
            const auto p = image_path(src_dir, a.image_id);
            fs::copy_file(p, out_dir / p.filename(), fs::copy_options::overwrite_existing);
            continue;
        }
        const auto* original = ds.find(it->second);
        const auto sample = apply_augmentation(load_image(image_path(src_dir, original->image_id)), original->boxes,
                                               spec, res.draws.at(a.image_id));
        write_ppm(out_dir / (a.image_id + ".ppm"), sample.image);
    }

    nlohmann::json manifest;
    manifest["augmented"] = res.manifest;
    manifest["draws"] = res.draws;
    manifest["removed"] = removed;
    manifest["cap_reached"] = res.cap_reached;
    manifest["final_ratio"] = std::isfinite(res.final_ratio) ? nlohmann::json(res.final_ratio) : nlohmann::json(nullptr);
    manifest["spec"] = {{"horizontal_flip", spec.horizontal_flip},
                        {"brightness_delta", spec.brightness_delta},
                        {"gaussian_noise_sigma", spec.gaussian_noise_sigma},
                        {"crop_fraction", spec.crop_fraction},
                        {"seed", spec.seed},
                        {"target_ratio", o.target_ratio}};
    write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

    const auto counts = class_box_counts(res.dataset);
    out << "images: " << ds.annotations.size() << " original + " << res.draws.size() << " augmented";
    if (!removed.empty()) out << " (" << removed.size() << " removed by preprocessing)";
    out << "\nper-class boxes:";
    for (std::size_t c = 0; c < counts.size(); ++c) out << " " << res.dataset.class_names[c] << "=" << counts[c];
    out << "\nimbalance ratio: " << format_fixed(res.final_ratio, 2) << (res.cap_reached ? " (copy cap reached)" : "")
        << "\n";
    return kOk;
}

// --- evaluate ---------------------------------------------------------------

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.detections.empty() == o.backend.empty()) {
        throw InvalidArgument("evaluate needs exactly one of --detections or --backend");
    }
    auto loaded = load_dataset(dataset_paths(o.data));
    if (!loaded.problems.empty()) throw IoError(loaded.problems.front());
    if (loaded.has_out_of_range_class) throw IoError("labels reference classes outside the class list");
    const auto validation = validate_dataset(loaded.dataset, loaded.label_files);
    const Dataset& ds = loaded.dataset;

    ImageDetections dets;
    std::string network = o.network;
    if (!o.detections.empty()) {
        dets = load_detections(o.detections, ds);
        if (network.empty()) network = fs::path(o.detections).filename().string();
    } else {
        auto backend = load_external_backend(o.backend, ds.class_names);
        if (network.empty()) network = backend->model_name();
        std::int64_t frame_id = 0;
        for (const auto& a : ds.annotations) {
            FrameRecord f;
            f.frame_id = frame_id++;
            f.width = a.image_width;
            f.height = a.image_height;
            f.truths = a.boxes;
            dets[a.image_id] = backend->detect(f);
        }
    }
    if (o.nms_threshold) {
        for (auto& [id, v] : dets) v = nms(v, *o.nms_threshold);
    }

    const auto report = evaluate(dets, ds, o.iou_thresholds, o.conf_threshold);
    const auto table = render_report_table(report, network);
    out << table;
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        auto j = report_to_json(report);
        j["network"] = network;
        write_text_file(fs::path(o.out) / "report.json", j.dump(2) + "\n");
        write_text_file(fs::path(o.out) / "report.txt", table);
    }
    if (validation.finding_count() > 0) {
        err << "dataset validation reported " << validation.finding_count() << " finding(s); run `rtdet validate`\n";
        return kFindings;
    }
    return kOk;
}

// --- run / replay -------------------------------------------------------------

void print_session(const RunArtifact& a, const std::vector<std::string>& names, std::ostream& out) {
    out << "session " << a.session_id << " " << to_string(a.end) << ": frames " << a.processed_frames.size()
        << " processed, " << a.dropped_frames.size() << " dropped; fps " << format_fixed(a.fps, 1) << "; resolution "
        << a.width << "x" << a.height << "\n";
    out << "counts:";
    for (std::size_t c = 0; c < names.size(); ++c) {
        const auto it = a.counts.per_class_count.find(static_cast<int>(c));
        out << " " << names[c] << "=" << (it == a.counts.per_class_count.end() ? 0 : it->second);
    }
    out << " total=" << a.counts.total << "\n";
    for (const auto& al : a.counts.alerts_fired) out << "alert: " << al.rule_id << " at frame " << al.frame_id << "\n";
    if (a.report) out << render_confusion_line(a.report->tp, a.report->fp, a.report->fn, a.report->average_iou) << "\n";
    out << "artifact: " << a.dir.string() << "\n";
}

using SourceFactory = std::function<std::unique_ptr<FrameSource>()>;

/// Serves sessions until the source finishes (headless) or, with a listener,
/// until no new start arrives within the idle window after a session ends.
std::vector<RunArtifact> serve_sessions(const RunConfig& cfg, DetectorBackend& backend, SourceFactory make,
                                        const Options& o, const fs::path& out_dir, std::ostream& out) {
    const auto& names = backend.class_names();
    auto first_source = make(); // surfaces SourceUnavailable before anything starts
    Broadcaster broadcaster;
    SessionController controller(&broadcaster, names);
    std::unique_ptr<ControlServer> server;
    if (!o.headless) {
        const auto addr = parse_listen_address(o.listen);
        server = std::make_unique<ControlServer>(controller, broadcaster, addr);
        out << "listening on " << addr.host << ":" << server->bound_port() << std::endl;
    }
    if (o.headless || !o.wait_for_start) controller.handle_control(Command::Start);

    std::vector<RunArtifact> artifacts;
    const auto idle = std::chrono::milliseconds(static_cast<std::int64_t>(cfg.idle_exit_seconds * 1000.0));
    for (;;) {
        auto snap = controller.snapshot();
        if (snap->status != Status::Running) {
            if (!server) break;
            const bool first = artifacts.empty();
            snap = controller.wait_for_change(snap->session_id, snap->status, first ? std::chrono::hours(24) : idle);
            if (snap->status != Status::Running) {
                if (first) continue;
                break;
            }
        }
        const auto k = artifacts.size() + 1;
        const auto dir = k == 1 ? out_dir : out_dir / ("session_" + std::to_string(k));
        auto source = first_source ? std::move(first_source) : make();
        artifacts.push_back(run_session(*source, backend, cfg, controller, broadcaster, dir));
        print_session(artifacts.back(), names, out);
        out.flush();
    }
    if (server) server->stop();
    broadcaster.close_all();
    return artifacts;
}

int cmd_run(const Options& o, std::ostream& out) {
    RunConfig cfg = load_run_config(o.config);
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.backend.empty()) cfg.backend = fs::absolute(o.backend).string();
    if (o.run_conf_threshold) cfg.conf_threshold = *o.run_conf_threshold;
    if (o.run_nms_threshold) cfg.nms_threshold = *o.run_nms_threshold;
    if (!o.network.empty()) cfg.network = o.network;

    auto descriptor = load_model_descriptor(cfg.resolve(cfg.backend));
    if (o.seed) descriptor.oracle.seed = *o.seed;
    auto backend = make_backend(descriptor, {}, cfg.resolve(cfg.backend).parent_path());
    const int n_classes = static_cast<int>(backend->class_names().size());
    resolve_alert_rules(cfg.alert_rules, backend->class_names());

    const auto out_dir = cfg.output_dir.is_relative() ? fs::current_path() / cfg.output_dir : cfg.output_dir;
    serve_sessions(cfg, *backend, [&] { return make_source(cfg.source, cfg.base_dir, n_classes); }, o, out_dir, out);
    return kOk;
}

nlohmann::json read_json_file(const fs::path& p, const char* what) {
    std::ifstream in(p);
    if (!in) throw CorruptArtifact(std::string("CorruptArtifact: missing ") + what + " " + p.string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw CorruptArtifact(std::string("CorruptArtifact: unreadable ") + what + " " + p.string());
    return j;
}

int cmd_replay(const Options& o, std::ostream& out, std::ostream& err) {
    const fs::path dir = o.artifact;
    if (!fs::is_directory(dir)) throw IoError("artifact directory not found: " + dir.string());
    const auto summary = read_json_file(dir / kArtifactSummary, "artifact summary");
    const auto snapshot = read_json_file(dir / kArtifactConfig, "config snapshot");
    const auto names = snapshot.value("class_names", std::vector<std::string>{});

    std::unique_ptr<DetectorBackend> backend;
    if (!o.backend.empty()) {
        backend = load_external_backend(o.backend, names);
    } else {
        backend = std::make_unique<PassthroughBackend>(names);
    }

    RunConfig cfg;
    try {
        cfg = run_config_from_json(snapshot, dir);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptArtifact(std::string("CorruptArtifact: config snapshot: ") + e.what());
    }
    cfg.record = false;
    cfg.output_dir = o.out.empty() ? dir / "replay" : fs::path(o.out);
    cfg.idle_exit_seconds = std::min(cfg.idle_exit_seconds, 2.0);

    // Reference lines: the session log for log replays, the sidecar for recordings.
    std::vector<std::string> expected;
    fs::path source_path;
    const bool from_recording = !o.recording.empty();
    if (from_recording) {
        source_path = dir / o.recording;
        if (!fs::exists(source_path)) throw CorruptArtifact("CorruptArtifact: recording " + source_path.string());
        auto sidecar = source_path;
        sidecar.replace_extension(".log");
        for (const auto& e : read_log_file(sidecar)) {
            if (!e.dropped) expected.push_back(log_line(e));
        }
    } else {
        source_path = dir / kArtifactLog;
        for (const auto& e : read_log_file(source_path)) {
            if (!e.dropped) expected.push_back(log_line(e));
        }
    }
    const double speed = o.speed;
    SourceFactory make = [&]() -> std::unique_ptr<FrameSource> {
        if (from_recording) return std::make_unique<RecordingSource>(source_path, speed);
        return std::make_unique<LogReplaySource>(source_path, speed);
    };

    const auto t0 = std::chrono::steady_clock::now();
    const auto artifacts = serve_sessions(cfg, *backend, make, o, cfg.output_dir, out);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << "replay wall time " << format_fixed(wall, 2) << " s at speed " << format_fixed(speed, 2) << "\n";
    if (artifacts.empty()) return kOk;

    const auto& replayed = artifacts.front();
    if (replayed.end != SessionEnd::EndOfStream) {
        out << "replay was stopped early; counts not compared\n";
        return kOk;
    }
    std::vector<std::string> got;
    for (const auto& l : replayed.log_lines) {
        if (l.find("\"dropped\":true") == std::string::npos) got.push_back(l);
    }
    // A recording that starts mid-session carries the live session's counts,
    // which a fresh tracker cannot reproduce; only the full session is comparable.
    const bool comparable =
        !from_recording || summary.value("frames_processed", std::size_t{0}) == expected.size();
    if (!comparable) {
        out << "recording covers part of the session; counts not compared\n";
        return kOk;
    }
    if (o.backend.empty() && got != expected) {
        std::size_t i = 0;
        while (i < got.size() && i < expected.size() && got[i] == expected[i]) ++i;
        err << "replay log differs from the stored log at entry " << i + 1 << "\n";
        return kError;
    }
    const auto stored = summary.value("counts_total", nlohmann::json::object());
    const auto recomputed = counts_to_json(replayed.counts.per_class_count, backend->class_names());
    if (stored != recomputed) {
        err << "replayed counts " << recomputed.dump() << " differ from stored counts " << stored.dump() << "\n";
        return kError;
    }
    out << "replayed counts match stored counts " << stored.dump() << "\n";
    return kOk;
}

// --- report -----------------------------------------------------------------

int cmd_report(const Options& o, std::ostream& out) {
    std::vector<SummaryRow> rows;
    for (const auto& input : o.inputs) {
        fs::path p = input;
        fs::path report_path = fs::is_directory(p) ? p / kArtifactReportJson : p;
        const auto j = read_json_file(report_path, "report");
        const auto rep = report_from_json(j);
        SummaryRow row;
        row.network = j.value("network", report_path.parent_path().filename().string());
        const auto at50 = rep.map_at(0.5);
        row.map = at50 ? *at50 : (rep.map.empty() ? 0.0 : rep.map.front());
        row.fps = rep.fps;
        const auto summary_path = report_path.parent_path() / kArtifactSummary;
        if (!row.fps && fs::exists(summary_path)) {
            const auto s = read_json_file(summary_path, "artifact summary");
            if (s.contains("fps") && s["fps"].is_number()) row.fps = s["fps"].get<double>();
        }
        rows.push_back(row);
    }
    const auto table = render_summary_table(rows);
    out << table;
    if (!o.out.empty()) write_text_file(o.out, table);
    return kOk;
}

void add_dataset_flags(CLI::App* cmd, DatasetOptions& d, bool required = true) {
    auto* opt = cmd->add_option("--dataset", d.dataset, "Dataset directory with images and <id>.txt labels");
    if (required) opt->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--labels", d.labels, "Label directory (default: the dataset directory)");
    cmd->add_option("--classes", d.classes, "Class-names file (default: classes.txt in the label or dataset directory)");
}

} // namespace

std::unique_ptr<CLI::App> build_app(Options& o) {
    auto app = std::make_unique<CLI::App>("Real-time detection toolkit: datasets, evaluation, live pipeline", "rtdet");
    app->require_subcommand(1);
    app->set_version_flag("--version", "rtdet 0.1.0");
    app->option_defaults()->always_capture_default();

    auto* validate = app->add_subcommand("validate", "Check a dataset for missing/orphan labels and class balance");
    add_dataset_flags(validate, o.data);
    validate->add_option("--json", o.validate_json, "Also write the findings as JSON to this file");

    auto* split = app->add_subcommand("split", "Stratified train/test split");
    add_dataset_flags(split, o.data);
    split->add_option("--test-fraction", o.test_fraction, "Fraction of images in the test split")
        ->check(CLI::Bound(0.0, 1.0));
    split->add_option("--seed", o.seed, "Random seed (required)")->required();
    split->add_option("--out", o.out, "Directory for train.txt and test.txt")->required();

    auto* augment = app->add_subcommand("augment", "Preprocess and balance a dataset with augmented copies");
    add_dataset_flags(augment, o.data);
    augment->add_option("--out", o.out, "Output dataset directory")->required();
    augment->add_option("--seed", o.seed, "Random seed (required)")->required();
    augment->add_option("--target-ratio", o.target_ratio, "Stop once the class imbalance ratio is at most this");
    augment->add_option("--flip", o.flip, "Horizontal flip probability")->check(CLI::Range(0.0, 1.0));
    augment->add_option("--brightness", o.brightness, "Maximum brightness shift")->check(CLI::Range(0.0, 255.0));
    augment->add_option("--noise", o.noise, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
    augment->add_option("--crop", o.crop, "Maximum fraction cropped per side")->check(CLI::Range(0.0, 0.3));
    augment->add_option("--dedupe-threshold", o.dedupe_threshold,
                        "Drop images whose mean absolute difference to the last kept image is at most this");
    augment->add_option("--sharpness-threshold", o.sharpness_threshold,
                        "Drop images whose Laplacian variance is below this");

    auto* evaluate = app->add_subcommand("evaluate", "Score detections against ground truth");
    add_dataset_flags(evaluate, o.data);
    evaluate->add_option("--detections", o.detections, "Directory of <id>.txt files: class cx cy w h confidence");
    evaluate->add_option("--backend", o.backend, "Model descriptor to run over the dataset instead");
    evaluate->add_option("--iou-thresholds", o.iou_thresholds, "Comma-separated IoU matching thresholds")
        ->delimiter(',');
    evaluate->add_option("--conf-threshold", o.conf_threshold, "Confidence cut for TP/FP/FN and average IoU")
        ->check(CLI::Range(0.0, 1.0));
    evaluate->add_option("--nms-threshold", o.nms_threshold, "Apply class-wise NMS first (default: off)")
        ->check(CLI::Range(0.0, 1.0));
    evaluate->add_option("--out", o.out, "Directory for report.json and report.txt");
    evaluate->add_option("--network", o.network, "Row label in the report table");

    auto add_session_flags = [&](CLI::App* cmd) {
        cmd->add_flag("--headless", o.headless, "Do not open the control/streaming socket");
        cmd->add_option("--listen", o.listen, "Control/streaming socket address host:port (port 0 = any)");
        cmd->add_flag("--wait-for-start", o.wait_for_start, "Wait for a start command instead of starting at once");
        cmd->add_option("--out", o.out, "Artifact directory");
    };

    auto* run = app->add_subcommand("run", "Run the live pipeline from a configuration file");
    run->add_option("config,--config", o.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    add_session_flags(run);
    run->add_option("--backend", o.backend, "Model descriptor (overrides the config)");
    run->add_option("--conf-threshold", o.run_conf_threshold, "Confidence filter (default: config value, 0.25)")
        ->check(CLI::Range(0.0, 1.0));
    run->add_option("--nms-threshold", o.run_nms_threshold, "NMS IoU threshold (default: config value, 0.45)")
        ->check(CLI::Range(0.0, 1.0));
    run->add_option("--seed", o.seed, "Oracle backend seed (overrides the descriptor)");
    run->add_option("--network", o.network, "Row label in the report table");

    auto* replay = app->add_subcommand("replay", "Re-stream a run artifact and re-derive its counts");
    replay->add_option("artifact,--artifact", o.artifact, "Run artifact directory")->required();
    add_session_flags(replay);
    replay->add_option("--speed", o.speed, "Playback speed multiplier (0 = as fast as possible)")
        ->check(CLI::NonNegativeNumber);
    replay->add_option("--recording", o.recording, "Replay this recording file of the artifact instead of the log");
    replay->add_option("--backend", o.backend, "Re-run detection with this model descriptor");

    auto* report = app->add_subcommand("report", "Summary table (Network, mAP, FPS) over reports or artifacts");
    report->add_option("inputs", o.inputs, "report.json files or artifact directories")->required();
    report->add_option("--out", o.out, "Also write the table to this file");
    return app;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    auto app = build_app(o);
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app->parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app->exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app->exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app->exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app->exit(e, out, err);
        return kError;
    }
    const auto* cmd = app->get_subcommands().front();
    const std::string name = cmd->get_name();
    try {
        if (name == "validate") return cmd_validate(o, out);
        if (name == "split") return cmd_split(o, out);
        if (name == "augment") return cmd_augment(o, out);
        if (name == "evaluate") return cmd_evaluate(o, out, err);
        if (name == "run") return cmd_run(o, out);
        if (name == "replay") return cmd_replay(o, out, err);
        if (name == "report") return cmd_report(o, out);
    } catch (const std::exception& e) {
        err << "rtdet " << name << ": " << e.what() << "\n";
        return kError;
    }
    return kError;
}

} // namespace rtdet::cli
