#pragma once

// Operator control state machine:
//
//   idle    --start-->  running
//   running --stop-->   stopped
//   stopped --start-->  running   (new session id, counts reset)
//
// record_on / record_off are accepted only while running. Every accepted
// transition is broadcast as a state message. Readers get immutable snapshots.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>

#include "rtdet/broadcast.hpp"
#include "rtdet/protocol.hpp"
#include "rtdet/tracking.hpp"

namespace rtdet {

class InvalidTransition : public Error {
public:
    InvalidTransition(Command cmd, Status from)
        : Error(std::string("InvalidTransition: ") + to_string(cmd) + " while " + to_string(from)), command_(cmd),
          from_(from) {}
    Command command() const noexcept { return command_; }
    Status from() const noexcept { return from_; }

private:
    Command command_;
    Status from_;
};

struct SessionState {
    std::int64_t session_id = 0;
    Status status = Status::Idle;
    bool recording = false;
    /// Incremented by every record_on; lets the pipeline tell two recordings apart.
    std::uint64_t recording_epoch = 0;
    double fps = 0.0;
    int width = 0;
    int height = 0;
    CountState counts;
    ClassCounts visible;
    std::int64_t started_at_ns = 0;
    std::int64_t stopped_at_ns = 0;
};

inline std::int64_t monotonic_now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

inline nlohmann::json state_message(const SessionState& s, const std::vector<std::string>& names) {
    return {{"type", "state"},
            {"session", s.session_id},
            {"status", to_string(s.status)},
            {"recording", s.recording},
            {"fps", s.fps},
            {"resolution", {s.width, s.height}},
            {"counts_total", counts_to_json(s.counts.per_class_count, names)},
            {"counts_visible", counts_to_json(s.visible, names)}};
}

class SessionController {
public:
    explicit SessionController(Broadcaster* broadcaster = nullptr, std::vector<std::string> class_names = {})
        : broadcaster_(broadcaster), class_names_(std::move(class_names)),
          state_(std::make_shared<const SessionState>()) {}

    /// Applies one command; throws InvalidTransition and leaves the state
    /// untouched when the command is not allowed.
    SessionState handle_control(Command cmd) {
        std::unique_lock lock(mu_);
        SessionState next = *state_;
        switch (cmd) {
        case Command::Start:
            if (next.status == Status::Running) throw InvalidTransition(cmd, next.status);
            next = SessionState{};
            next.session_id = state_->session_id + 1;
            next.recording_epoch = state_->recording_epoch;
            next.status = Status::Running;
            next.started_at_ns = monotonic_now_ns();
            break;
        case Command::Stop:
            if (next.status != Status::Running) throw InvalidTransition(cmd, next.status);
            next.status = Status::Stopped;
            next.recording = false;
            next.stopped_at_ns = monotonic_now_ns();
            break;
        case Command::RecordOn:
            if (next.status != Status::Running || next.recording) throw InvalidTransition(cmd, next.status);
            next.recording = true;
            ++next.recording_epoch;
            break;
        case Command::RecordOff:
            if (next.status != Status::Running || !next.recording) throw InvalidTransition(cmd, next.status);
            next.recording = false;
            break;
        }
        return commit(lock, std::move(next), true);
    }

    std::shared_ptr<const SessionState> snapshot() const {
        std::lock_guard lock(mu_);
        return state_;
    }

    /// Pipeline-side metrics refresh; not broadcast as a state change.
    void publish_metrics(std::int64_t session_id, double fps, int width, int height, const CountState& counts,
                         const ClassCounts& visible) {
        std::unique_lock lock(mu_);
        if (state_->session_id != session_id) return;
        SessionState next = *state_;
        next.fps = fps;
        next.width = width;
        next.height = height;
        next.counts = counts;
        next.visible = visible;
        commit(lock, std::move(next), false);
    }

    /// Recording turned off by the pipeline (e.g. disk full).
    void force_recording_off(std::int64_t session_id) {
        std::unique_lock lock(mu_);
        if (state_->session_id != session_id || !state_->recording) return;
        SessionState next = *state_;
        next.recording = false;
        commit(lock, std::move(next), true);
    }

    /// The session's source ran dry: running -> stopped.
    void finish_session(std::int64_t session_id) {
        std::unique_lock lock(mu_);
        if (state_->session_id != session_id || state_->status != Status::Running) return;
        SessionState next = *state_;
        next.status = Status::Stopped;
        next.recording = false;
        next.stopped_at_ns = monotonic_now_ns();
        commit(lock, std::move(next), true);
    }

    /// Blocks until the state differs from `seen_session`/`seen_status`, or timeout.
    std::shared_ptr<const SessionState> wait_for_change(std::int64_t seen_session, Status seen_status,
                                                        std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] {
            return state_->session_id != seen_session || state_->status != seen_status;
        });
        return state_;
    }

    const std::vector<std::string>& class_names() const noexcept { return class_names_; }

private:
    SessionState commit(std::unique_lock<std::mutex>& lock, SessionState next, bool announce) {
        state_ = std::make_shared<const SessionState>(std::move(next));
        auto snap = state_;
        // Published under the lock so subscribers see transitions in order.
        if (announce && broadcaster_) broadcaster_->publish(MessageKind::State, state_message(*snap, class_names_));
        cv_.notify_all();
        lock.unlock();
        return *snap;
    }

    Broadcaster* broadcaster_;
    std::vector<std::string> class_names_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::shared_ptr<const SessionState> state_;
};

} // namespace rtdet
