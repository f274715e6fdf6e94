#pragma once

#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace vidnn {

// Minimal persistent worker pool for the hot kernels. Work is always split
// into one contiguous chunk per thread, so every output element is computed
// by exactly one thread in a fixed arithmetic order: results are
// bit-identical for a given thread count regardless of scheduling.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    /// Global kernel thread count. 1 disables the pool entirely.
    static int threads() { return instance().threads_; }
    static void set_threads(int n) {
        if (n < 1) n = 1;
        instance().ensure_workers(n - 1);
        instance().threads_ = n;
    }

    // Runs fn(begin, end) over [0, n) split into `threads()` contiguous
    // chunks. Work splitting never changes results: every element is fully
    // computed by exactly one chunk, so a concurrent caller (the pool is
    // busy) can simply run inline.
    template <typename Fn>
    static void parallel_for(std::size_t n, Fn&& fn) {
        ThreadPool& pool = instance();
        const int t = pool.threads_;
        if (t <= 1 || n < 2) {
            if (n > 0) fn(std::size_t{0}, n);
            return;
        }
        std::unique_lock<std::mutex> busy(pool.busy_mu_, std::try_to_lock);
        if (!busy.owns_lock()) {
            fn(std::size_t{0}, n);
            return;
        }
        const std::size_t chunk = (n + static_cast<std::size_t>(t) - 1) / static_cast<std::size_t>(t);
        std::function<void(std::size_t, std::size_t)> body = fn;
        pool.run_chunks(n, chunk, body);
    }

private:
    ThreadPool() : threads_(default_threads()) { ensure_workers(threads_ - 1); }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lock(mu_);
            stopping_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    static int default_threads() {
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }

    void ensure_workers(int wanted) {
        std::unique_lock<std::mutex> lock(mu_);
        while (static_cast<int>(workers_.size()) < wanted) {
            int id = static_cast<int>(workers_.size());
            workers_.emplace_back([this, id] { worker_loop(id); });
        }
    }

    void run_chunks(std::size_t n, std::size_t chunk, const std::function<void(std::size_t, std::size_t)>& body) {
        {
            std::unique_lock<std::mutex> lock(mu_);
            task_ = &body;
            task_n_ = n;
            task_chunk_ = chunk;
            pending_ = 0;
            for (int id = 0; id < static_cast<int>(workers_.size()); ++id) {
                std::size_t begin = chunk * static_cast<std::size_t>(id + 1);
                if (begin < n) ++pending_;
            }
            ++generation_;
        }
        cv_.notify_all();
        body(0, std::min(chunk, n));  // chunk 0 runs on the calling thread
        std::unique_lock<std::mutex> lock(mu_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        task_ = nullptr;
    }

    void worker_loop(int id) {
        std::size_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t, std::size_t)>* task = nullptr;
            std::size_t begin = 0, end = 0;
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [&] { return stopping_ || generation_ != seen; });
                if (stopping_) return;
                seen = generation_;
                begin = task_chunk_ * static_cast<std::size_t>(id + 1);
                end = std::min(begin + task_chunk_, task_n_);
                if (begin < task_n_) task = task_;
            }
            if (task) {
                (*task)(begin, end);
                std::unique_lock<std::mutex> lock(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex busy_mu_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::size_t, std::size_t)>* task_ = nullptr;
    std::size_t task_n_ = 0;
    std::size_t task_chunk_ = 0;
    std::size_t generation_ = 0;
    int pending_ = 0;
    bool stopping_ = false;
    int threads_ = 1;
};

template <typename Fn>
inline void parallel_for(std::size_t n, Fn&& fn) {
    ThreadPool::parallel_for(n, std::forward<Fn>(fn));
}

}  // namespace vidnn
