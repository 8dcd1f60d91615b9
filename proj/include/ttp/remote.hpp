#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "ttp/error.hpp"

namespace ttp {

/// Bounds the number of in-flight remote requests across every client that
/// shares it.
class RequestBudget {
public:
    explicit RequestBudget(std::size_t slots = 4) : free_(std::max<std::size_t>(slots, 1)), slots_(free_) {}

    RequestBudget(const RequestBudget&) = delete;
    RequestBudget& operator=(const RequestBudget&) = delete;

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return free_ > 0; });
        --free_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            ++free_;
        }
        cv_.notify_one();
    }
    std::size_t slots() const noexcept { return slots_; }

    class Slot {
    public:
        explicit Slot(RequestBudget& b) : b_(b) { b_.acquire(); }
        ~Slot() { b_.release(); }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        RequestBudget& b_;
    };

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::size_t free_;
    std::size_t slots_;
};

struct RetryPolicy {
    std::size_t max_attempts = 6;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{60000};

    std::chrono::milliseconds backoff_before(std::size_t attempt) const {
        // attempt is 1-based; no wait before the first try
        double ms = static_cast<double>(initial_backoff.count());
        for (std::size_t i = 2; i < attempt; ++i) ms *= multiplier;
        return std::chrono::milliseconds(
            static_cast<long long>(std::min(ms, static_cast<double>(max_backoff.count()))));
    }
};

/// Outcome of one HTTP exchange as seen by the retry loop.
struct Attempt {
    int status = 0;  // 0 = transport failure
    std::string body;
    std::string error;
    std::optional<std::chrono::milliseconds> retry_after;
};

inline bool is_retryable_status(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

/// Runs `send` until it yields a 2xx, a non-retryable status, or the policy
/// runs out. Throws TransportError carrying the attempt count.
inline Attempt with_retries(const RetryPolicy& policy, RequestBudget* budget, const std::string& what,
                            const std::function<Attempt()>& send,
                            const std::function<void(std::chrono::milliseconds)>& sleep =
                                [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    Attempt last;
    for (std::size_t attempt = 1; attempt <= std::max<std::size_t>(policy.max_attempts, 1); ++attempt) {
        if (attempt > 1) {
            auto wait = policy.backoff_before(attempt);
            if (last.retry_after) wait = std::max(wait, *last.retry_after);
            sleep(wait);
        }
        if (budget) {
            RequestBudget::Slot slot(*budget);
            last = send();
        } else {
            last = send();
        }
        if (last.status >= 200 && last.status < 300) return last;
        if (!is_retryable_status(last.status)) {
            throw TransportError(what + " failed with HTTP " + std::to_string(last.status) + ": " +
                                     last.body.substr(0, 300),
                                 attempt, false);
        }
    }
    std::string detail = last.status == 0 ? last.error : "HTTP " + std::to_string(last.status);
    throw TransportError(what + " failed (" + detail + ")", std::max<std::size_t>(policy.max_attempts, 1), true);
}

}  // namespace ttp
