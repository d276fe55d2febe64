#pragma once

// Fan-out of protocol messages to subscribers. Each subscriber owns a bounded
// buffer: when it is full of frame messages the oldest unsent frame message is
// discarded. Alert, state and error messages are never discarded.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rtdet {

enum class MessageKind { Frame, Alert, State, Error };

struct OutboundMessage {
    MessageKind kind = MessageKind::Frame;
    std::string line; // serialized JSON without the trailing newline
};

class Subscription {
public:
    explicit Subscription(std::size_t frame_capacity) : frame_capacity_(frame_capacity == 0 ? 1 : frame_capacity) {}

    void push(OutboundMessage msg) {
        std::lock_guard lock(mu_);
        if (closed_) return;
        if (msg.kind == MessageKind::Frame) {
            if (frames_buffered_ >= frame_capacity_) {
                const auto it = std::find_if(buffer_.begin(), buffer_.end(),
                                             [](const OutboundMessage& m) { return m.kind == MessageKind::Frame; });
                buffer_.erase(it);
                --frames_buffered_;
                ++frames_dropped_;
            }
            ++frames_buffered_;
        }
        buffer_.push_back(std::move(msg));
        cv_.notify_one();
    }

    /// Waits up to `timeout` for a message; nullopt on timeout or when closed
    /// and drained.
    std::optional<OutboundMessage> pop(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] { return closed_ || !buffer_.empty(); });
        return take_locked();
    }

    std::optional<OutboundMessage> try_pop() {
        std::lock_guard lock(mu_);
        return take_locked();
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        cv_.notify_all();
    }

    bool closed() const {
        std::lock_guard lock(mu_);
        return closed_;
    }

    std::size_t frames_dropped() const {
        std::lock_guard lock(mu_);
        return frames_dropped_;
    }

private:
    std::optional<OutboundMessage> take_locked() {
        if (buffer_.empty()) return std::nullopt;
        OutboundMessage m = std::move(buffer_.front());
        buffer_.pop_front();
        if (m.kind == MessageKind::Frame) --frames_buffered_;
        return m;
    }

    const std::size_t frame_capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<OutboundMessage> buffer_;
    std::size_t frames_buffered_ = 0;
    std::size_t frames_dropped_ = 0;
    bool closed_ = false;
};

class Broadcaster {
public:
    static constexpr std::size_t kDefaultFrameCapacity = 16;

    std::shared_ptr<Subscription> subscribe(std::size_t frame_capacity = kDefaultFrameCapacity) {
        auto sub = std::make_shared<Subscription>(frame_capacity);
        std::lock_guard lock(mu_);
        subs_.push_back(sub);
        return sub;
    }

    /// Fire-and-forget; closed subscriptions are pruned here.
    void publish(MessageKind kind, const nlohmann::json& msg) {
        std::vector<std::shared_ptr<Subscription>> targets;
        {
            std::lock_guard lock(mu_);
            std::erase_if(subs_, [](const std::shared_ptr<Subscription>& s) { return s->closed(); });
            if (subs_.empty()) return;
            targets = subs_;
        }
        OutboundMessage out{kind, msg.dump()};
        for (auto& s : targets) s->push(out);
    }

    std::size_t subscriber_count() const {
        std::lock_guard lock(mu_);
        return static_cast<std::size_t>(
            std::count_if(subs_.begin(), subs_.end(), [](const auto& s) { return !s->closed(); }));
    }

    void close_all() {
        std::lock_guard lock(mu_);
        for (auto& s : subs_) s->close();
        subs_.clear();
    }

private:
    mutable std::mutex mu_;
    std::vector<std::shared_ptr<Subscription>> subs_;
};

} // namespace rtdet
