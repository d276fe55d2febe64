#pragma once

// Dataset directories on disk: image files with `<id>.txt` label files beside
// them (or in a separate label directory) and a class-names file.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rtdet/annotation.hpp"
#include "rtdet/image.hpp"
#include "rtdet/metrics.hpp"

namespace rtdet {

struct DatasetPaths {
    std::filesystem::path images;
    /// Defaults to `images`.
    std::filesystem::path labels;
    /// Defaults to `classes.txt` in the label directory, then the image directory.
    std::filesystem::path classes;
};

struct LoadedDataset {
    Dataset dataset;
    /// File names found in the label directory.
    std::vector<std::string> label_files;
    /// Per-file problems: unreadable image headers and label parse errors.
    std::vector<std::string> problems;
    /// Images whose labels reference class ids outside the class list.
    bool has_out_of_range_class = false;
};

inline std::filesystem::path find_class_file(const DatasetPaths& p) {
    if (!p.classes.empty()) return p.classes;
    const auto labels = p.labels.empty() ? p.images : p.labels;
    for (const auto& dir : {labels, p.images}) {
        if (std::filesystem::exists(dir / "classes.txt")) return dir / "classes.txt";
    }
    throw IoError("no classes.txt in " + labels.string());
}

/// Loads every image in the directory (sorted by id). Images without a label
/// file are negative samples; the validator reports them separately. Class
/// ids are not range-checked here so that validation can report them.
inline LoadedDataset load_dataset(const DatasetPaths& paths) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(paths.images)) throw IoError("dataset directory not found: " + paths.images.string());
    const auto label_dir = paths.labels.empty() ? paths.images : paths.labels;
    if (!fs::is_directory(label_dir)) throw IoError("label directory not found: " + label_dir.string());

    LoadedDataset out;
    out.dataset.class_names = parse_class_names(read_text_file(find_class_file(paths)));
    if (out.dataset.class_names.empty()) throw IoError("class list is empty");

    std::vector<fs::path> images;
    for (const auto& e : fs::directory_iterator(paths.images)) {
        if (e.is_regular_file() && is_image_extension(e.path())) images.push_back(e.path());
    }
    std::sort(images.begin(), images.end());
    for (const auto& e : fs::directory_iterator(label_dir)) {
        if (e.is_regular_file()) out.label_files.push_back(e.path().filename().string());
    }
    std::sort(out.label_files.begin(), out.label_files.end());

    for (const auto& img : images) {
        ImageAnnotation a;
        a.image_id = img.stem().string();
        const auto bytes = read_file_bytes(img);
        const auto size = sniff_image_size(bytes);
        if (!size || size->width <= 0 || size->height <= 0) {
            out.problems.push_back(img.filename().string() + ": unreadable image header");
            continue;
        }
        a.image_width = size->width;
        a.image_height = size->height;
        const auto label = label_dir / (a.image_id + ".txt");
        if (fs::exists(label)) {
            try {
                a.boxes = parse_label_file(read_text_file(label), std::numeric_limits<int>::max());
            } catch (const LabelError& e) {
                out.problems.push_back(label.filename().string() + ": " + e.what());
            }
        }
        for (const auto& b : a.boxes) {
            if (b.class_id >= out.dataset.class_count()) out.has_out_of_range_class = true;
        }
        out.dataset.annotations.push_back(std::move(a));
    }
    return out;
}

/// Strict variant for evaluation and augmentation: any problem is an error.
inline Dataset load_dataset_strict(const DatasetPaths& paths) {
    auto loaded = load_dataset(paths);
    if (!loaded.problems.empty()) throw IoError(loaded.problems.front());
    if (loaded.has_out_of_range_class) throw IoError("labels reference classes outside the class list");
    return std::move(loaded.dataset);
}

/// Detection files: `<class_id> <cx> <cy> <w> <h> <confidence>` per line.
inline std::vector<Detection> parse_detection_file(std::string_view text, int class_count) {
    std::vector<Detection> out;
    detail::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        auto fields = detail::split_fields(line);
        if (fields.empty()) return;
        if (fields.size() != 6) {
            throw LabelError(LabelErrorKind::MalformedLine, line_no,
                             "expected 6 fields, got " + std::to_string(fields.size()));
        }
        double conf = 0.0;
        if (!detail::parse_number(fields[5], conf) || !(conf >= 0.0 && conf <= 1.0)) {
            throw LabelError(LabelErrorKind::MalformedLine, line_no, "bad confidence '" + std::string(fields[5]) + "'");
        }
        BoundingBox b;
        double* coords[4] = {&b.cx, &b.cy, &b.w, &b.h};
        bool ok = detail::parse_number(fields[0], b.class_id);
        for (int k = 0; k < 4 && ok; ++k) ok = detail::parse_number(fields[k + 1], *coords[k]);
        if (!ok) throw LabelError(LabelErrorKind::MalformedLine, line_no, "non-numeric field");
        if (b.class_id < 0 || b.class_id >= class_count) {
            throw LabelError(LabelErrorKind::ClassOutOfRange, line_no, "class " + std::to_string(b.class_id));
        }
        if (!in_unit_range(b)) throw LabelError(LabelErrorKind::CoordinateOutOfRange, line_no, std::string(line));
        out.push_back({b, conf, std::nullopt});
    });
    return out;
}

inline std::string emit_detection_file(std::span<const Detection> dets) {
    std::string out;
    char buf[160];
    for (const auto& d : dets) {
        const int n = std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f %.6f\n", d.box.class_id, d.box.cx,
                                    d.box.cy, d.box.w, d.box.h, d.confidence);
        out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
}

/// Reads `<image_id>.txt` detection files for the images of `ds`. Files for
/// unknown images raise UnknownImage; images without a file have no detections.
inline ImageDetections load_detections(const std::filesystem::path& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("detections directory not found: " + dir.string());
    ImageDetections out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".txt" || e.path().filename() == "classes.txt") continue;
        const auto id = e.path().stem().string();
        if (!ds.find(id)) throw UnknownImage(id);
        try {
            out[id] = parse_detection_file(read_text_file(e.path()), ds.class_count());
        } catch (const LabelError& err) {
            throw IoError(e.path().filename().string() + ": " + err.what());
        }
    }
    return out;
}

/// Writes `<id>.txt` label files and classes.txt into `dir`.
inline void write_labels(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text_file(dir / "classes.txt", emit_class_names(ds.class_names));
    for (const auto& a : ds.annotations) write_text_file(dir / (a.image_id + ".txt"), emit_label_file(a.boxes));
}

} // namespace rtdet
