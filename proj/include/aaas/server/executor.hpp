#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

// Shared lane pool for kernel execution. Each launch submits one job made of
// independent tasks (one per lane block); workers pick tasks round-robin
// across active jobs, so concurrent launches interleave instead of queueing
// behind each other. Results never depend on scheduling because every task
// writes a disjoint output range.

namespace aaas::server {

class LaneExecutor {
public:
    explicit LaneExecutor(unsigned workers);
    ~LaneExecutor();

    LaneExecutor(const LaneExecutor&) = delete;
    LaneExecutor& operator=(const LaneExecutor&) = delete;

    unsigned workers() const { return static_cast<unsigned>(threads_.size()); }

    // Runs every task to completion, possibly interleaved with other jobs,
    // and rethrows the first task exception. Safe to call from any thread
    // except the executor's own workers.
    void run_job(std::vector<std::function<void()>> tasks);

private:
    struct Job {
        std::deque<std::function<void()>> pending;
        std::size_t running = 0;
        std::exception_ptr failure;
    };

    void worker_loop();

    std::mutex mutex_;
    std::condition_variable work_ready_;
    std::condition_variable job_done_;
    std::deque<std::shared_ptr<Job>> ready_;  // jobs with pending tasks, in pick order
    bool stopping_ = false;
    std::vector<std::thread> threads_;
};

}  // namespace aaas::server
