#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>

namespace rtdet {

/// Frame-rate meter fed with monotonic timestamps (nanoseconds).
///
/// The exponential moving average (smoothing 0.1) runs over frame intervals
/// and the published rate is its reciprocal, so a constant stream reads
/// exactly its rate and a rate step settles geometrically in the period.
/// Zero or negative intervals are ignored; the reading is always finite and
/// non-negative.
class FpsMeter {
public:
    static constexpr double kSmoothing = 0.1;

    explicit FpsMeter(double smoothing = kSmoothing) : smoothing_(smoothing) {}

    void tick(std::int64_t timestamp_ns) noexcept {
        if (last_ && timestamp_ns > *last_) {
            const double dt = static_cast<double>(timestamp_ns - *last_) * 1e-9;
            instantaneous_ = 1.0 / dt;
            mean_interval_ = mean_interval_ > 0.0 ? mean_interval_ + smoothing_ * (dt - mean_interval_) : dt;
        }
        if (!last_ || timestamp_ns > *last_) last_ = timestamp_ns;
    }

    /// Smoothed frames/second; 0 until two distinct timestamps were seen.
    double fps() const noexcept {
        if (!(mean_interval_ > 0.0)) return 0.0;
        const double v = 1.0 / mean_interval_;
        return std::isfinite(v) ? v : 0.0;
    }

    std::optional<double> instantaneous() const noexcept { return instantaneous_; }

    void reset() noexcept {
        last_.reset();
        mean_interval_ = 0.0;
        instantaneous_.reset();
    }

private:
    double smoothing_;
    std::optional<std::int64_t> last_;
    double mean_interval_ = 0.0; // 0 until the first interval
    std::optional<double> instantaneous_;
};

/// Smoothed fps after feeding every timestamp.
inline double measure_fps(std::span<const std::int64_t> timestamps_ns) {
    FpsMeter m;
    for (auto t : timestamps_ns) m.tick(t);
    return m.fps();
}

} // namespace rtdet
