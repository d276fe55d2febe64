#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>

namespace rtdet {

enum class OverflowPolicy {
    Block,      // producer waits for room
    DropOldest, // producer evicts the head
};

/// Bounded FIFO hand-off between pipeline stages.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity, OverflowPolicy policy = OverflowPolicy::Block)
        : capacity_(capacity == 0 ? 1 : capacity), policy_(policy) {}

    BoundedQueue(const BoundedQueue&) = delete;
    BoundedQueue& operator=(const BoundedQueue&) = delete;

    /// Pushes `item`. Under DropOldest a full queue evicts its head first;
    /// `on_evict(evicted, new_head)` sees the evicted item and the element now
    /// at the front. Returns false once the queue is closed.
    template <typename OnEvict>
    bool push(T item, OnEvict&& on_evict) {
        std::unique_lock lock(mu_);
        if (policy_ == OverflowPolicy::Block) {
            not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        }
        if (closed_) return false;
        if (items_.size() >= capacity_) {
            T evicted = std::move(items_.front());
            items_.pop_front();
            ++dropped_;
            if (!items_.empty()) {
                on_evict(evicted, items_.front());
            } else {
                on_evict(evicted, item);
            }
        }
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    bool push(T item) {
        return push(std::move(item), [](const T&, T&) {});
    }

    /// Blocks for the next item; nullopt once closed and drained.
    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T v = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return v;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return items_.size();
    }

    std::size_t dropped() const {
        std::lock_guard lock(mu_);
        return dropped_;
    }

    std::size_t capacity() const noexcept { return capacity_; }
    OverflowPolicy policy() const noexcept { return policy_; }

private:
    const std::size_t capacity_;
    const OverflowPolicy policy_;
    mutable std::mutex mu_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
    std::deque<T> items_;
    std::size_t dropped_ = 0;
    bool closed_ = false;
};

} // namespace rtdet
