#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "rtdet/image.hpp"
#include "rtdet/metrics.hpp"

namespace rtdet {

/// The pipeline's unit of work.
struct FrameRecord {
    std::int64_t frame_id = 0;
    /// Monotonic-clock nanoseconds at capture.
    std::int64_t timestamp_ns = 0;
    int width = 0;
    int height = 0;
    /// Absent for metadata-only sources and replays.
    std::shared_ptr<const PixelImage> pixels;
    /// Ground truth, when the source knows it (synthetic scenes, labelled
    /// image sequences, recordings made from either).
    std::optional<std::vector<BoundingBox>> truths;
    /// Detections already produced for this frame (replay sources).
    std::optional<std::vector<Detection>> recorded_detections;
    /// Frames evicted from the input queue just ahead of this one.
    std::vector<std::int64_t> dropped_before;
    /// Monotonic time the pipeline accepted the frame; basis of latency.
    std::int64_t dispatched_ns = 0;
};

} // namespace rtdet
