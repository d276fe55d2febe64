#pragma once

// Dataset cleaning (near-duplicate frames, blurry frames) and label-preserving
// augmentation: horizontal flip, brightness shift, Gaussian noise, crop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rtdet/annotation.hpp"
#include "rtdet/image.hpp"
#include "rtdet/random.hpp"

namespace rtdet {

class EmptyInput : public Error {
public:
    using Error::Error;
};
class ImageTooSmall : public Error {
public:
    using Error::Error;
};

/// Mean absolute per-sample difference. Images must share dimensions.
inline double mean_abs_difference(const PixelImage& a, const PixelImage& b) {
    if (a.width != b.width || a.height != b.height) {
        throw InvalidArgument("mean_abs_difference: image dimensions differ");
    }
    if (a.data.empty()) return 0.0;
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        sum += static_cast<std::uint64_t>(std::abs(int(a.data[i]) - int(b.data[i])));
    }
    return static_cast<double>(sum) / static_cast<double>(a.data.size());
}

/// Indices of frames to keep: frame 0, then each frame that differs from the
/// last kept frame by more than `diff_threshold`. Frames of a different size
/// than the last kept one always count as different.
inline std::vector<std::size_t> dedupe_frames(std::span<const PixelImage> frames, double diff_threshold) {
    if (frames.empty()) throw EmptyInput("dedupe_frames: no frames");
    std::vector<std::size_t> kept{0};
    for (std::size_t i = 1; i < frames.size(); ++i) {
        const auto& last = frames[kept.back()];
        const bool resized = frames[i].width != last.width || frames[i].height != last.height;
        if (resized || mean_abs_difference(frames[i], last) > diff_threshold) kept.push_back(i);
    }
    return kept;
}

struct SharpnessVerdict {
    bool keep = false;
    double sharpness = 0.0;
};

/// Variance of the 4-neighbour discrete Laplacian of the grayscale image,
/// over interior pixels.
inline double laplacian_variance(const PixelImage& img) {
    if (img.width < 3 || img.height < 3) {
        throw ImageTooSmall("laplacian_variance: image must be at least 3x3, got " + std::to_string(img.width) + "x" +
                            std::to_string(img.height));
    }
    const auto g = to_grayscale(img);
    const int w = img.width;
    auto at = [&](int x, int y) { return g[static_cast<std::size_t>(y) * w + x]; };
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;
    for (int y = 1; y + 1 < img.height; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
            const double lap = at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y);
            sum += lap;
            sum_sq += lap * lap;
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    return std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
}

inline SharpnessVerdict reject_blurry(const PixelImage& img, double sharpness_threshold) {
    const double s = laplacian_variance(img);
    return {!(s < sharpness_threshold), s};
}

/// Mean over a (2r+1)x(2r+1) window, edges clamped.
inline PixelImage box_blur(const PixelImage& img, int radius) {
    PixelImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                int sum = 0;
                int n = 0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const int sx = std::clamp(x + dx, 0, img.width - 1);
                        const int sy = std::clamp(y + dy, 0, img.height - 1);
                        sum += img.pixel(sx, sy)[c];
                        ++n;
                    }
                }
                out.pixel(x, y)[c] = static_cast<std::uint8_t>((sum + n / 2) / n);
            }
        }
    }
    return out;
}

// --- augmentation ------------------------------------------------------------

struct AugmentationSpec {
    double horizontal_flip = 0.5;     // probability
    double brightness_delta = 0.0;    // max absolute shift, [0,255]
    double gaussian_noise_sigma = 0.0;
    double crop_fraction = 0.0;       // max removable fraction per side, [0,0.3]
    std::uint64_t seed = 0;

    void validate() const {
        if (!(horizontal_flip >= 0.0 && horizontal_flip <= 1.0)) {
            throw InvalidArgument("augmentation: horizontal_flip must be a probability");
        }
        if (!(brightness_delta >= 0.0 && brightness_delta <= 255.0)) {
            throw InvalidArgument("augmentation: brightness_delta must lie in [0,255]");
        }
        if (!(gaussian_noise_sigma >= 0.0)) throw InvalidArgument("augmentation: noise sigma must be >= 0");
        if (!(crop_fraction >= 0.0 && crop_fraction <= 0.3)) {
            throw InvalidArgument("augmentation: crop_fraction must lie in [0,0.3]");
        }
    }
};

/// Pixel crop window; [left, right) x [top, bottom).
struct CropWindow {
    int left = 0;
    int top = 0;
    int right = 0;
    int bottom = 0;
};

/// Every random decision for one (spec, draw) pair, resolved for an image size.
struct AugmentationPlan {
    bool flip = false;
    int brightness = 0;
    double noise_sigma = 0.0;
    CropWindow crop;
    int image_width = 0;
    int image_height = 0;
    std::uint64_t noise_key = 0;
};

inline AugmentationPlan plan_augmentation(const AugmentationSpec& spec, std::uint64_t draw, int width, int height) {
    spec.validate();
    AugmentationPlan p;
    p.image_width = width;
    p.image_height = height;
    p.flip = keyed_stream(spec.seed, draw, 0, RngPurpose::Flip).uniform() < spec.horizontal_flip;
    if (spec.brightness_delta > 0.0) {
        const double shift = keyed_stream(spec.seed, draw, 0, RngPurpose::Brightness)
                                 .uniform(-spec.brightness_delta, spec.brightness_delta);
        p.brightness = static_cast<int>(std::lround(shift));
    }
    p.noise_sigma = spec.gaussian_noise_sigma;
    p.noise_key = KeyedStream(spec.seed, {draw, static_cast<std::uint64_t>(RngPurpose::Noise)}).key();
    p.crop = {0, 0, width, height};
    if (spec.crop_fraction > 0.0) {
        auto rng = keyed_stream(spec.seed, draw, 0, RngPurpose::Crop);
        const auto side = [&](int extent) {
            return static_cast<int>(std::floor(rng.uniform(0.0, spec.crop_fraction) * extent));
        };
        const int l = side(width), r = side(width), t = side(height), b = side(height);
        p.crop = {l, t, width - r, height - b};
    }
    return p;
}

inline constexpr double kMinVisibleFraction = 0.25;

/// Re-expresses boxes in the frame of a crop given in normalized coordinates
/// of the source image. Boxes with less than 25% of their area visible are
/// dropped; the rest are clipped to the window.
inline std::vector<BoundingBox> crop_boxes(std::span<const BoundingBox> boxes, double x0, double y0, double x1,
                                           double y1) {
    std::vector<BoundingBox> out;
    const double cw = x1 - x0;
    const double ch = y1 - y0;
    for (const auto& b : boxes) {
        const double vx0 = std::max(b.x_min(), x0), vx1 = std::min(b.x_max(), x1);
        const double vy0 = std::max(b.y_min(), y0), vy1 = std::min(b.y_max(), y1);
        if (vx1 <= vx0 || vy1 <= vy0) continue;
        const double visible = (vx1 - vx0) * (vy1 - vy0);
        if (visible < kMinVisibleFraction * b.area()) continue;
        if (vx0 == b.x_min() && vx1 == b.x_max() && vy0 == b.y_min() && vy1 == b.y_max()) {
            // Fully inside: transform center and size directly.
            out.push_back({b.class_id, (b.cx - x0) / cw, (b.cy - y0) / ch, b.w / cw, b.h / ch});
            continue;
        }
        if (auto nb = box_from_corners(b.class_id, (vx0 - x0) / cw, (vy0 - y0) / ch, (vx1 - x0) / cw, (vy1 - y0) / ch)) {
            out.push_back(*nb);
        }
    }
    return out;
}

inline BoundingBox flip_box(BoundingBox b) noexcept {
    b.cx = 1.0 - b.cx;
    return b;
}

inline PixelImage flip_image(const PixelImage& img) {
    PixelImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const auto* s = img.pixel(img.width - 1 - x, y);
            auto* d = out.pixel(x, y);
            d[0] = s[0];
            d[1] = s[1];
            d[2] = s[2];
        }
    }
    return out;
}

/// Geometry half of an augmentation; usable without pixels.
inline std::vector<BoundingBox> augment_boxes(std::span<const BoundingBox> boxes, const AugmentationPlan& plan) {
    std::vector<BoundingBox> out(boxes.begin(), boxes.end());
    const auto& c = plan.crop;
    if (c.left != 0 || c.top != 0 || c.right != plan.image_width || c.bottom != plan.image_height) {
        const double w = plan.image_width, h = plan.image_height;
        out = crop_boxes(out, c.left / w, c.top / h, c.right / w, c.bottom / h);
    }
    if (plan.flip) {
        for (auto& b : out) b = flip_box(b);
    }
    for (auto& b : out) {
        if (!is_valid_box(b)) {
            if (auto clamped = clamp_box(b)) b = *clamped;
        }
    }
    return out;
}

inline PixelImage augment_pixels(const PixelImage& img, const AugmentationPlan& plan) {
    const auto& c = plan.crop;
    PixelImage out(c.right - c.left, c.bottom - c.top);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const int sx = plan.flip ? c.right - 1 - x : c.left + x;
            const auto* s = img.pixel(sx, c.top + y);
            auto* d = out.pixel(x, y);
            d[0] = s[0];
            d[1] = s[1];
            d[2] = s[2];
        }
    }
    if (plan.brightness != 0 || plan.noise_sigma > 0.0) {
        KeyedStream noise(plan.noise_key);
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            double v = out.data[i] + plan.brightness;
            if (plan.noise_sigma > 0.0) {
                // One independent keyed stream per sample index.
                KeyedStream s(noise.at(i));
                v += s.normal(0.0, plan.noise_sigma);
            }
            out.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return out;
}

struct AugmentedSample {
    PixelImage image;
    std::vector<BoundingBox> boxes;
};

/// Pure function of (image, boxes, spec, draw).
inline AugmentedSample apply_augmentation(const PixelImage& image, std::span<const BoundingBox> boxes,
                                          const AugmentationSpec& spec, std::uint64_t draw) {
    const auto plan = plan_augmentation(spec, draw, image.width, image.height);
    return {augment_pixels(image, plan), augment_boxes(boxes, plan)};
}

// --- balancing ---------------------------------------------------------------

/// Each source image may be copied at most this many times.
inline constexpr int kMaxCopiesPerImage = 10;

struct BalanceResult {
    Dataset dataset;
    /// source image_id -> augmented image_ids, in creation order
    std::map<std::string, std::vector<std::string>> manifest;
    /// copy ordinal (the augmentation draw) of each new image
    std::map<std::string, std::uint64_t> draws;
    bool cap_reached = false;
    double final_ratio = 1.0;
};

/// Appends augmented copies of images holding the current minority class until
/// the per-class box imbalance is <= target_ratio or every candidate image has
/// been copied kMaxCopiesPerImage times.
inline BalanceResult balance_dataset(const Dataset& ds, const AugmentationSpec& spec, double target_ratio) {
    spec.validate();
    BalanceResult res;
    res.dataset = ds;
    auto counts = class_box_counts(ds);
    res.final_ratio = imbalance_ratio(counts);
    if (ds.class_names.empty()) return res;

    std::map<std::string, int> copies;
    std::set<std::string> taken_ids;
    for (const auto& a : ds.annotations) taken_ids.insert(a.image_id);
    std::uint64_t draw = 0;
    const std::size_t n_original = ds.annotations.size();
    std::map<int, std::size_t> cursor; // round-robin position per minority class

    while (res.final_ratio > target_ratio) {
        const int minority = static_cast<int>(std::min_element(counts.begin(), counts.end()) - counts.begin());
        // Originals holding the minority class, in id order.
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < n_original; ++i) {
            const auto& a = ds.annotations[i];
            const bool has = std::any_of(a.boxes.begin(), a.boxes.end(),
                                         [&](const BoundingBox& b) { return b.class_id == minority; });
            if (has && copies[a.image_id] < kMaxCopiesPerImage) candidates.push_back(i);
        }
        if (candidates.empty()) {
            res.cap_reached = true;
            break;
        }
        std::sort(candidates.begin(), candidates.end(), [&](std::size_t x, std::size_t y) {
            return ds.annotations[x].image_id < ds.annotations[y].image_id;
        });
        const auto& src = ds.annotations[candidates[cursor[minority]++ % candidates.size()]];
        const int n = ++copies[src.image_id];
        std::string new_id = src.image_id + "_aug" + std::to_string(n);
        while (taken_ids.contains(new_id)) new_id += "_";
        taken_ids.insert(new_id);

        const auto plan = plan_augmentation(spec, draw, src.image_width, src.image_height);
        ImageAnnotation copy;
        copy.image_id = new_id;
        copy.image_width = plan.crop.right - plan.crop.left;
        copy.image_height = plan.crop.bottom - plan.crop.top;
        copy.boxes = augment_boxes(src.boxes, plan);
        for (const auto& b : copy.boxes) {
            if (b.class_id >= 0 && static_cast<std::size_t>(b.class_id) < counts.size()) ++counts[b.class_id];
        }
        res.dataset.annotations.push_back(std::move(copy));
        res.manifest[src.image_id].push_back(new_id);
        res.draws[new_id] = draw;
        ++draw;
        res.final_ratio = imbalance_ratio(counts);
    }
    return res;
}

} // namespace rtdet
