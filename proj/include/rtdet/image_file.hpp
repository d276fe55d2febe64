#pragma once

// Decoding image files to pixels. PPM is handled natively; other formats
// need a build with OpenCV.

#include <filesystem>

#include "rtdet/image.hpp"

#ifdef RTDET_HAVE_OPENCV
#include <cstring>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#endif

namespace rtdet {

inline PixelImage load_image(const std::filesystem::path& p) {
    if (p.extension() == ".ppm") return read_ppm(p);
#ifdef RTDET_HAVE_OPENCV
    const cv::Mat bgr = cv::imread(p.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw IoError("cannot decode image " + p.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    PixelImage img(rgb.cols, rgb.rows);
    for (int y = 0; y < rgb.rows; ++y) {
        std::memcpy(img.pixel(0, y), rgb.ptr(y), static_cast<std::size_t>(rgb.cols) * 3);
    }
    return img;
#else
    throw IoError("cannot decode " + p.string() + ": only PPM images are supported without OpenCV");
#endif
}

inline bool can_decode(const std::filesystem::path& p) {
#ifdef RTDET_HAVE_OPENCV
    return is_image_extension(p);
#else
    return p.extension() == ".ppm";
#endif
}

} // namespace rtdet
