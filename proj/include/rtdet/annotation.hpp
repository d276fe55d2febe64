#pragma once

// Per-image label files in normalized center format:
//
//   <class_id> <cx> <cy> <w> <h>\n
//
// one line per object, coordinates divided by the image width/height.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rtdet/error.hpp"
#include "rtdet/random.hpp"

namespace rtdet {

/// Slack allowed on box extents after floating-point geometry.
inline constexpr double kExtentTolerance = 1e-9;

struct BoundingBox {
    int class_id = 0;
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    constexpr double x_min() const noexcept { return cx - w / 2.0; }
    constexpr double x_max() const noexcept { return cx + w / 2.0; }
    constexpr double y_min() const noexcept { return cy - h / 2.0; }
    constexpr double y_max() const noexcept { return cy + h / 2.0; }
    constexpr double area() const noexcept { return w * h; }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Coordinates in [0,1], strictly positive size. Extents are not checked.
constexpr bool in_unit_range(const BoundingBox& b) noexcept {
    return b.class_id >= 0 && b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0 && b.w > 0.0 &&
           b.w <= 1.0 && b.h > 0.0 && b.h <= 1.0;
}

/// Full stored-box invariant: unit range plus extents inside the image.
constexpr bool is_valid_box(const BoundingBox& b) noexcept {
    return in_unit_range(b) && b.x_min() >= -kExtentTolerance && b.x_max() <= 1.0 + kExtentTolerance &&
           b.y_min() >= -kExtentTolerance && b.y_max() <= 1.0 + kExtentTolerance;
}

/// Builds a box from corner coordinates, clipping the corners to the unit square.
/// Returns nullopt when nothing of positive area remains.
inline std::optional<BoundingBox> box_from_corners(int class_id, double x0, double y0, double x1, double y1) {
    x0 = std::clamp(x0, 0.0, 1.0);
    x1 = std::clamp(x1, 0.0, 1.0);
    y0 = std::clamp(y0, 0.0, 1.0);
    y1 = std::clamp(y1, 0.0, 1.0);
    if (!(x1 > x0) || !(y1 > y0)) return std::nullopt;
    return BoundingBox{class_id, (x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0};
}

/// Re-clips a box so its extents lie inside the image.
inline std::optional<BoundingBox> clamp_box(const BoundingBox& b) {
    return box_from_corners(b.class_id, b.x_min(), b.y_min(), b.x_max(), b.y_max());
}

enum class LabelErrorKind { MalformedLine, ClassOutOfRange, CoordinateOutOfRange };

class LabelError : public Error {
public:
    LabelError(LabelErrorKind kind, std::size_t line, const std::string& what)
        : Error(describe(kind) + " at line " + std::to_string(line) + ": " + what), kind_(kind), line_(line) {}

    LabelErrorKind kind() const noexcept { return kind_; }
    /// 1-based line number; 0 when the error is not tied to a line.
    std::size_t line() const noexcept { return line_; }

    static std::string describe(LabelErrorKind kind) {
        switch (kind) {
        case LabelErrorKind::MalformedLine: return "MalformedLine";
        case LabelErrorKind::ClassOutOfRange: return "ClassOutOfRange";
        case LabelErrorKind::CoordinateOutOfRange: return "CoordinateOutOfRange";
        }
        return "LabelError";
    }

private:
    LabelErrorKind kind_;
    std::size_t line_;
};

namespace detail {

inline bool is_field_space(char c) noexcept { return c == ' ' || c == '\t'; }

/// Splits on runs of spaces/tabs.
inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_field_space(line[i])) ++i;
        const std::size_t start = i;
        while (i < line.size() && !is_field_space(line[i])) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if constexpr (std::is_floating_point_v<T>) {
        if (first != last && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, out, std::chars_format::general);
        return ec == std::errc() && ptr == last && std::isfinite(out);
    } else {
        auto [ptr, ec] = std::from_chars(first, last, out);
        return ec == std::errc() && ptr == last;
    }
}

/// Iterates lines, stripping a trailing '\r'. Callback gets (1-based number, text).
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        fn(++line_no, line);
        pos = end + 1;
    }
}

} // namespace detail

/// Parses one label file. Blank lines are skipped; any run of spaces or tabs
/// separates fields.
inline std::vector<BoundingBox> parse_label_file(std::string_view text, int class_count) {
    std::vector<BoundingBox> boxes;
    detail::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        const auto fields = detail::split_fields(line);
        if (fields.empty()) return;
        if (fields.size() != 5) {
            throw LabelError(LabelErrorKind::MalformedLine, line_no,
                             "expected 5 fields, got " + std::to_string(fields.size()));
        }
        BoundingBox b;
        if (!detail::parse_number(fields[0], b.class_id)) {
            throw LabelError(LabelErrorKind::MalformedLine, line_no,
                             "class id '" + std::string(fields[0]) + "' is not an integer");
        }
        double* coords[4] = {&b.cx, &b.cy, &b.w, &b.h};
        for (int k = 0; k < 4; ++k) {
            if (!detail::parse_number(fields[k + 1], *coords[k])) {
                throw LabelError(LabelErrorKind::MalformedLine, line_no,
                                 "field '" + std::string(fields[k + 1]) + "' is not a number");
            }
        }
        if (b.class_id < 0 || b.class_id >= class_count) {
            throw LabelError(LabelErrorKind::ClassOutOfRange, line_no,
                             "class " + std::to_string(b.class_id) + " with " + std::to_string(class_count) +
                                 " classes");
        }
        if (!in_unit_range(b)) {
            throw LabelError(LabelErrorKind::CoordinateOutOfRange, line_no, std::string(line));
        }
        boxes.push_back(b);
    });
    return boxes;
}

inline std::string emit_label_line(const BoundingBox& b) {
    char buf[128];
    const int n = std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f\n", b.class_id, b.cx, b.cy, b.w, b.h);
    return std::string(buf, static_cast<std::size_t>(n));
}

/// Canonical emission: single spaces, 6 decimals, '\n' after every line.
inline std::string emit_label_file(const std::vector<BoundingBox>& boxes) {
    std::string out;
    out.reserve(boxes.size() * 40);
    for (const auto& b : boxes) out += emit_label_line(b);
    return out;
}

/// A box in pixel units, center format.
struct PixelBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
};

inline BoundingBox normalize_box(const PixelBox& p, int image_width, int image_height, int class_id = 0) {
    if (image_width <= 0 || image_height <= 0) {
        throw InvalidArgument("normalize_box: image dimensions must be positive");
    }
    const double iw = image_width;
    const double ih = image_height;
    BoundingBox b{class_id, p.cx / iw, p.cy / ih, p.w / iw, p.h / ih};
    if (!in_unit_range(b)) {
        throw LabelError(LabelErrorKind::CoordinateOutOfRange, 0, "normalized box leaves the unit square");
    }
    return b;
}

inline PixelBox denormalize_box(const BoundingBox& b, int image_width, int image_height) {
    const double iw = image_width;
    const double ih = image_height;
    return PixelBox{b.cx * iw, b.cy * ih, b.w * iw, b.h * ih};
}

struct ImageAnnotation {
    std::string image_id;
    int image_width = 0;
    int image_height = 0;
    std::vector<BoundingBox> boxes;
};

enum class Split { Train, Test };

struct Dataset {
    std::vector<std::string> class_names;
    std::vector<ImageAnnotation> annotations;
    std::map<std::string, Split> split_assignment;

    int class_count() const noexcept { return static_cast<int>(class_names.size()); }

    const ImageAnnotation* find(std::string_view image_id) const {
        for (const auto& a : annotations) {
            if (a.image_id == image_id) return &a;
        }
        return nullptr;
    }
};

inline bool is_valid_image_id(std::string_view id) {
    return !id.empty() && id.find('/') == std::string_view::npos && id.find('\\') == std::string_view::npos;
}

/// Class-names file: one name per line, index = line number from 0.
/// Trailing blank lines are ignored.
inline std::vector<std::string> parse_class_names(std::string_view text) {
    std::vector<std::string> names;
    detail::for_each_line(text, [&](std::size_t, std::string_view line) { names.emplace_back(line); });
    while (!names.empty() && names.back().empty()) names.pop_back();
    return names;
}

inline std::string emit_class_names(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) {
        out += n;
        out += '\n';
    }
    return out;
}

/// Box count per class id over the whole dataset (size = class_count()).
inline std::vector<std::size_t> class_box_counts(const Dataset& ds) {
    std::vector<std::size_t> counts(ds.class_names.size(), 0);
    for (const auto& a : ds.annotations) {
        for (const auto& b : a.boxes) {
            if (b.class_id >= 0 && static_cast<std::size_t>(b.class_id) < counts.size()) ++counts[b.class_id];
        }
    }
    return counts;
}

/// max count / min count; +inf when some class has no boxes, 1 for an empty class list.
inline double imbalance_ratio(const std::vector<std::size_t>& counts) {
    if (counts.empty()) return 1.0;
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (*lo == 0) return *hi == 0 ? 1.0 : std::numeric_limits<double>::infinity();
    return static_cast<double>(*hi) / static_cast<double>(*lo);
}

struct ValidationReport {
    std::vector<std::string> missing_labels;   // images without a label file
    std::vector<std::string> orphan_labels;    // label files without an image
    std::vector<std::string> duplicate_ids;
    std::vector<std::string> bad_class_images; // images holding a class id >= class_count
    std::vector<std::size_t> per_class_counts;
    double imbalance_ratio = 1.0;

    std::size_t finding_count() const noexcept {
        return missing_labels.size() + orphan_labels.size() + duplicate_ids.size() + bad_class_images.size();
    }
};

/// `label_files` is the listing of the label directory (file names, any
/// extension; only `.txt` entries other than `classes.txt` count as labels).
inline ValidationReport validate_dataset(const Dataset& ds, const std::vector<std::string>& label_files) {
    ValidationReport r;
    std::set<std::string> label_stems;
    for (const auto& f : label_files) {
        if (f.size() > 4 && f.compare(f.size() - 4, 4, ".txt") == 0 && f != "classes.txt") {
            label_stems.insert(f.substr(0, f.size() - 4));
        }
    }
    std::set<std::string> seen;
    std::set<std::string> dup;
    for (const auto& a : ds.annotations) {
        if (!seen.insert(a.image_id).second) dup.insert(a.image_id);
        if (!label_stems.contains(a.image_id)) r.missing_labels.push_back(a.image_id);
        const bool bad = std::any_of(a.boxes.begin(), a.boxes.end(),
                                     [&](const BoundingBox& b) { return b.class_id >= ds.class_count(); });
        if (bad) r.bad_class_images.push_back(a.image_id);
    }
    for (const auto& stem : label_stems) {
        if (!seen.contains(stem)) r.orphan_labels.push_back(stem);
    }
    r.duplicate_ids.assign(dup.begin(), dup.end());
    r.per_class_counts = class_box_counts(ds);
    r.imbalance_ratio = rtdet::imbalance_ratio(r.per_class_counts);
    return r;
}

class DatasetTooSmall : public Error {
public:
    using Error::Error;
};

/// FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t stable_hash(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Class with the most boxes in the image (lowest id on ties); -1 when empty.
inline int dominant_class(const ImageAnnotation& a) {
    std::map<int, int> n;
    for (const auto& b : a.boxes) ++n[b.class_id];
    int best = -1;
    int best_n = 0;
    for (const auto& [cls, count] : n) {
        if (count > best_n) {
            best = cls;
            best_n = count;
        }
    }
    return best;
}

/// Stratified (by dominant class) seeded train/test split.
/// |test| = round(test_fraction * N); each stratum with >= 2 images lands in
/// both splits whenever the test size allows it.
inline Dataset split_dataset(Dataset ds, double test_fraction, std::uint64_t seed) {
    const std::size_t n = ds.annotations.size();
    if (n < 2) throw DatasetTooSmall("split_dataset needs at least 2 annotations, got " + std::to_string(n));
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InvalidArgument("split_dataset: test_fraction must lie in (0,1)");
    }
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));

    // Strata in class-id order, members in seeded-hash order.
    std::map<int, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < n; ++i) strata[dominant_class(ds.annotations[i])].push_back(i);
    auto order_key = [&](std::size_t i) {
        return std::pair{KeyedStream(seed, {stable_hash(ds.annotations[i].image_id),
                                            static_cast<std::uint64_t>(RngPurpose::Split)})
                             .at(0),
                         ds.annotations[i].image_id};
    };
    std::vector<std::vector<std::size_t>*> groups;
    for (auto& [cls, members] : strata) {
        std::sort(members.begin(), members.end(),
                  [&](std::size_t a, std::size_t b) { return order_key(a) < order_key(b); });
        groups.push_back(&members);
    }

    // Largest-remainder apportionment of n_test over strata.
    std::vector<std::size_t> quota(groups.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double exact = test_fraction * static_cast<double>(groups[g]->size());
        quota[g] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[g];
        remainders.emplace_back(exact - std::floor(exact), g);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n_test && k < remainders.size(); ++k, ++assigned) {
        ++quota[remainders[k].second];
    }
    // Rounding of the total can exceed the floor sum by more than the group count
    // only in degenerate cases; fill greedily.
    for (std::size_t g = 0; assigned < n_test && g < groups.size(); ++g) {
        while (assigned < n_test && quota[g] < groups[g]->size()) {
            ++quota[g];
            ++assigned;
        }
    }

    // Rebalance so every stratum of size >= 2 is represented in both splits.
    auto size_of = [&](std::size_t g) { return groups[g]->size(); };
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (size_of(g) < 2) continue;
        if (quota[g] == 0) {
            for (std::size_t d = 0; d < groups.size(); ++d) {
                const bool donor_ok = size_of(d) >= 2 ? quota[d] >= 2 : quota[d] >= 1;
                if (d != g && donor_ok) {
                    --quota[d];
                    ++quota[g];
                    break;
                }
            }
        } else if (quota[g] == size_of(g)) {
            for (std::size_t d = 0; d < groups.size(); ++d) {
                const bool room = size_of(d) >= 2 ? quota[d] + 2 <= size_of(d) : quota[d] < size_of(d);
                if (d != g && room) {
                    --quota[g];
                    ++quota[d];
                    break;
                }
            }
        }
    }

    ds.split_assignment.clear();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& members = *groups[g];
        for (std::size_t k = 0; k < members.size(); ++k) {
            ds.split_assignment[ds.annotations[members[k]].image_id] = k < quota[g] ? Split::Test : Split::Train;
        }
    }
    return ds;
}

} // namespace rtdet
