#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rtdet/annotation.hpp"
#include "rtdet/error.hpp"

namespace rtdet {

/// Row-major interleaved RGB, 8 bits per sample.
struct PixelImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    static constexpr int kChannels = 3;

    PixelImage() = default;
    PixelImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * kChannels, fill) {
        if (w < 0 || h < 0) throw InvalidArgument("PixelImage: negative dimensions");
    }

    std::size_t sample_count() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }

    std::uint8_t* pixel(int x, int y) noexcept {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * kChannels;
    }
    const std::uint8_t* pixel(int x, int y) const noexcept {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * kChannels;
    }

    void set(int x, int y, std::array<std::uint8_t, 3> rgb) noexcept {
        auto* p = pixel(x, y);
        p[0] = rgb[0];
        p[1] = rgb[1];
        p[2] = rgb[2];
    }

    friend bool operator==(const PixelImage&, const PixelImage&) = default;
};

/// Luma (BT.601 weights) per pixel.
inline std::vector<double> to_grayscale(const PixelImage& img) {
    std::vector<double> g(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto* p = img.data.data() + i * 3;
        g[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
    return g;
}

inline void fill_rect(PixelImage& img, int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> rgb) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, img.width);
    y1 = std::min(y1, img.height);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) img.set(x, y, rgb);
    }
}

/// 1-pixel outline of a normalized box.
inline void draw_box_outline(PixelImage& img, const BoundingBox& b, std::array<std::uint8_t, 3> rgb) {
    if (img.width == 0 || img.height == 0) return;
    auto px = [&](double v) { return std::clamp(static_cast<int>(v * img.width), 0, img.width - 1); };
    auto py = [&](double v) { return std::clamp(static_cast<int>(v * img.height), 0, img.height - 1); };
    const int x0 = px(b.x_min()), x1 = px(b.x_max()), y0 = py(b.y_min()), y1 = py(b.y_max());
    for (int x = x0; x <= x1; ++x) {
        img.set(x, y0, rgb);
        img.set(x, y1, rgb);
    }
    for (int y = y0; y <= y1; ++y) {
        img.set(x0, y, rgb);
        img.set(x1, y, rgb);
    }
}

// --- PPM (P6) ---------------------------------------------------------------

inline std::string encode_ppm(const PixelImage& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
    return out;
}

inline PixelImage decode_ppm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_space();
        long v = 0;
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
        if (pos == start) throw IoError("PPM: expected integer in header");
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw IoError("PPM: missing P6 magic");
    pos = 2;
    const long w = read_int();
    const long h = read_int();
    const long maxval = read_int();
    if (maxval != 255) throw IoError("PPM: only maxval 255 is supported");
    ++pos; // single whitespace byte before raster
    PixelImage img(static_cast<int>(w), static_cast<int>(h));
    if (bytes.size() < pos + img.data.size()) throw IoError("PPM: truncated raster");
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.data.size(), img.data.begin());
    return img;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_text_file(const std::filesystem::path& p, std::string_view text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw IoError("cannot write " + p.string());
}

inline PixelImage read_ppm(const std::filesystem::path& p) {
    const auto bytes = read_file_bytes(p);
    return decode_ppm(bytes);
}

inline void write_ppm(const std::filesystem::path& p, const PixelImage& img) { write_text_file(p, encode_ppm(img)); }

// --- header sniffing ----------------------------------------------------------

struct ImageSize {
    int width = 0;
    int height = 0;
};

/// Reads width/height from PPM, PNG, JPEG or BMP headers without decoding.
inline std::optional<ImageSize> sniff_image_size(std::span<const std::uint8_t> b) {
    auto be16 = [&](std::size_t i) { return (b[i] << 8) | b[i + 1]; };
    auto be32 = [&](std::size_t i) {
        return static_cast<int>((std::uint32_t(b[i]) << 24) | (std::uint32_t(b[i + 1]) << 16) |
                                (std::uint32_t(b[i + 2]) << 8) | b[i + 3]);
    };
    auto le32 = [&](std::size_t i) {
        return static_cast<std::int32_t>(std::uint32_t(b[i]) | (std::uint32_t(b[i + 1]) << 8) |
                                         (std::uint32_t(b[i + 2]) << 16) | (std::uint32_t(b[i + 3]) << 24));
    };
    if (b.size() >= 24 && b[0] == 0x89 && b[1] == 'P' && b[2] == 'N' && b[3] == 'G') {
        return ImageSize{be32(16), be32(20)};
    }
    if (b.size() >= 26 && b[0] == 'B' && b[1] == 'M') {
        const int h = le32(22);
        return ImageSize{le32(18), h < 0 ? -h : h};
    }
    if (b.size() >= 2 && b[0] == 'P' && b[1] == '6') {
        const std::string head(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(b.size(), 64)));
        int w = 0, h = 0;
        if (std::sscanf(head.c_str(), "P6 %d %d", &w, &h) == 2) return ImageSize{w, h};
        return std::nullopt;
    }
    if (b.size() >= 4 && b[0] == 0xFF && b[1] == 0xD8) {
        std::size_t i = 2;
        while (i + 9 < b.size()) {
            if (b[i] != 0xFF) {
                ++i;
                continue;
            }
            const int marker = b[i + 1];
            if (marker == 0xD8 || marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7) || marker == 0xFF) {
                ++i;
                continue;
            }
            const int len = be16(i + 2);
            const bool sof = (marker >= 0xC0 && marker <= 0xCF) && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
            if (sof) return ImageSize{be16(i + 7), be16(i + 5)};
            i += 2 + static_cast<std::size_t>(len);
        }
    }
    return std::nullopt;
}

inline bool is_image_extension(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".ppm" || ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

} // namespace rtdet
