#pragma once

// Video-file and camera sources. Only available when built against OpenCV
// (RTDET_HAVE_OPENCV); the rest of the toolkit does not depend on it.

#ifdef RTDET_HAVE_OPENCV

#include <cstring>
#include <memory>
#include <string>

#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "rtdet/source.hpp"

namespace rtdet {

class VideoCaptureSource final : public FrameSource {
public:
    /// Video file, played back at `speed` x its frame rate (0 = unpaced).
    VideoCaptureSource(const std::string& path, double speed) : live_(false), pacer_(speed), name_(path) {
        if (!cap_.open(path)) throw SourceUnavailable("SourceUnavailable: cannot open video " + path);
        fps_ = cap_.get(cv::CAP_PROP_FPS);
        if (!(fps_ > 0.0)) fps_ = kNominalFps;
    }

    /// Camera device; frames arrive on the device clock.
    explicit VideoCaptureSource(int device) : live_(true), pacer_(0.0), name_("camera:" + std::to_string(device)) {
        if (!cap_.open(device)) throw SourceUnavailable("SourceUnavailable: cannot open camera " + std::to_string(device));
    }

    std::optional<FrameRecord> next() override {
        cv::Mat bgr;
        if (!cap_.read(bgr) || bgr.empty()) return std::nullopt;
        cv::Mat rgb;
        cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
        auto img = std::make_shared<PixelImage>(rgb.cols, rgb.rows);
        for (int y = 0; y < rgb.rows; ++y) {
            std::memcpy(img->pixel(0, y), rgb.ptr(y), static_cast<std::size_t>(rgb.cols) * 3);
        }
        FrameRecord f;
        f.frame_id = next_id_++;
        f.timestamp_ns = live_ ? steady_ns() : static_cast<std::int64_t>(static_cast<double>(f.frame_id) * 1e9 / fps_);
        pacer_.wait(f.timestamp_ns);
        f.width = img->width;
        f.height = img->height;
        f.pixels = std::move(img);
        return f;
    }

    bool live() const override { return live_; }
    std::string describe() const override { return name_; }

private:
    cv::VideoCapture cap_;
    bool live_;
    Pacer pacer_;
    std::string name_;
    double fps_ = kNominalFps;
    std::int64_t next_id_ = 0;
};

} // namespace rtdet

#endif // RTDET_HAVE_OPENCV
