#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace crophybrid {

// Persistent worker pool with a work-stealing index counter. Work items must
// be independent; numerical determinism is the caller's job (the conv layers
// achieve it by accumulating into per-item buffers that are reduced in a
// fixed order afterwards). With one thread everything runs inline.
class ThreadPool {
public:
    explicit ThreadPool(unsigned threads = 1) {
        const unsigned n = threads == 0 ? 1 : threads;
        for (unsigned i = 0; i + 1 < n; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    ~ThreadPool() {
        {
            std::unique_lock lk(m_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

    unsigned size() const { return static_cast<unsigned>(workers_.size()) + 1; }

    // Runs fn(i) for every i in [0, n); returns when all are done. The calling
    // thread participates.
    void run(std::size_t n, const std::function<void(std::size_t)>& fn) {
        if (n == 0) return;
        if (workers_.empty() || n == 1) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        {
            std::unique_lock lk(m_);
            fn_ = &fn;
            total_ = n;
            next_.store(0, std::memory_order_relaxed);
            active_ = workers_.size();
            ++generation_;
        }
        cv_.notify_all();
        for (;;) {
            const std::size_t i = next_.fetch_add(1, std::memory_order_relaxed);
            if (i >= total_) break;
            fn(i);
        }
        std::unique_lock lk(m_);
        done_cv_.wait(lk, [this] { return active_ == 0; });
        fn_ = nullptr;
    }

    static unsigned default_threads() {
        if (const char* env = std::getenv("CROPHYBRID_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1) return static_cast<unsigned>(v);
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : hc;
    }

private:
    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t)>* fn = nullptr;
            {
                std::unique_lock lk(m_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                fn = fn_;
            }
            for (;;) {
                const std::size_t i = next_.fetch_add(1, std::memory_order_relaxed);
                if (i >= total_) break;
                (*fn)(i);
            }
            {
                std::unique_lock lk(m_);
                if (--active_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex m_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(std::size_t)>* fn_ = nullptr;
    std::size_t total_ = 0;
    std::atomic<std::size_t> next_{0};
    std::size_t active_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace crophybrid
