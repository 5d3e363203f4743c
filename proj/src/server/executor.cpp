#include "aaas/server/executor.hpp"

#include <utility>

namespace aaas::server {

LaneExecutor::LaneExecutor(unsigned workers) {
    if (workers == 0) workers = 1;
    threads_.reserve(workers);
    for (unsigned i = 0; i < workers; ++i) {
        threads_.emplace_back([this] { worker_loop(); });
    }
}

LaneExecutor::~LaneExecutor() {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        stopping_ = true;
    }
    work_ready_.notify_all();
    for (auto& t : threads_) t.join();
}

void LaneExecutor::worker_loop() {
    std::unique_lock<std::mutex> lock(mutex_);
    for (;;) {
        work_ready_.wait(lock, [this] { return stopping_ || !ready_.empty(); });
        if (stopping_) return;

        // Take one task from the front job, then rotate the job to the back
        // so the next worker (or this one) services a different launch.
        auto job = ready_.front();
        ready_.pop_front();
        auto task = std::move(job->pending.front());
        job->pending.pop_front();
        if (!job->pending.empty()) ready_.push_back(job);
        job->running += 1;

        lock.unlock();
        std::exception_ptr err;
        try {
            task();
        } catch (...) {
            err = std::current_exception();
        }
        lock.lock();

        job->running -= 1;
        if (err && !job->failure) job->failure = err;
        if (job->pending.empty() && job->running == 0) job_done_.notify_all();
    }
}

void LaneExecutor::run_job(std::vector<std::function<void()>> tasks) {
    if (tasks.empty()) return;
    auto job = std::make_shared<Job>();
    for (auto& t : tasks) job->pending.push_back(std::move(t));

    std::unique_lock<std::mutex> lock(mutex_);
    ready_.push_back(job);
    work_ready_.notify_all();
    job_done_.wait(lock, [&] { return job->pending.empty() && job->running == 0; });
    if (job->failure) std::rethrow_exception(job->failure);
}

}  // namespace aaas::server
