#ifndef TFSCOPE_PARALLEL_HPP
#define TFSCOPE_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tfscope {

namespace detail {
inline std::atomic<int>& thread_cap() {
    static std::atomic<int> cap{0};
    return cap;
}
} // namespace detail

/// Caps worker threads used by library kernels; 0 means hardware concurrency.
inline void set_max_threads(int n) { detail::thread_cap().store(std::max(0, n)); }

inline int max_threads() {
    const int cap = detail::thread_cap().load();
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return cap > 0 ? cap : hw;
}

/// Applies a thread cap for the guard's lifetime; a cap of 0 leaves the setting alone.
class ThreadCapGuard {
public:
    explicit ThreadCapGuard(int cap) : previous_(detail::thread_cap().load()), active_(cap > 0) {
        if (active_) {
            set_max_threads(cap);
        }
    }
    ~ThreadCapGuard() {
        if (active_) {
            detail::thread_cap().store(previous_);
        }
    }
    ThreadCapGuard(const ThreadCapGuard&) = delete;
    ThreadCapGuard& operator=(const ThreadCapGuard&) = delete;

private:
    int previous_;
    bool active_;
};

/**
 * Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries do
 * not depend on the thread count, so any per-chunk reduction that is combined
 * in chunk order is schedule independent. The first exception thrown by any
 * chunk is rethrown on the caller.
 */
template <typename Body>
void parallel_for(std::size_t n, std::size_t grain, Body&& body) {
    if (n == 0) {
        return;
    }
    grain = std::max<std::size_t>(grain, 1);
    const std::size_t chunks = (n + grain - 1) / grain;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(max_threads()), chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
            body(c * grain, std::min(n, (c + 1) * grain));
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= chunks) {
                return;
            }
            try {
                body(c * grain, std::min(n, (c + 1) * grain));
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace tfscope

#endif
