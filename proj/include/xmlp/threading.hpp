#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace xmlp {

// Persistent worker pool. Work is expressed as `n_chunks` independent chunks
// with boundaries fixed by the caller (never derived from the thread count),
// so numerical results do not depend on how many workers execute them.
class ThreadPool {
  struct Job {
    const std::function<void(int)>* fn = nullptr;
    std::atomic<int> next{0};
    std::atomic<int> pending{0};
    int total = 0;
    uint64_t id = 0;
  };

 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  ~ThreadPool() { stop(); }

  void set_threads(int n) {
    if (n < 1) n = 1;
    std::lock_guard<std::mutex> api_lock(api_mutex_);
    if (n == threads_) return;
    stop();
    threads_ = n;
    start();
  }

  int threads() const { return threads_; }

  // Runs fn(chunk) for chunk in [0, n_chunks); the calling thread
  // participates. Returns after all chunks complete.
  void parallel_for(int n_chunks, const std::function<void(int)>& fn) {
    if (n_chunks <= 0) return;
    if (threads_ <= 1 || n_chunks == 1) {
      for (int i = 0; i < n_chunks; ++i) fn(i);
      return;
    }
    std::lock_guard<std::mutex> api_lock(api_mutex_);
    auto job = std::make_shared<Job>();
    job->fn = &fn;
    job->pending.store(n_chunks, std::memory_order_relaxed);
    job->total = n_chunks;
    {
      std::lock_guard<std::mutex> lk(mutex_);
      job->id = ++job_counter_;
      current_ = job;
    }
    cv_.notify_all();
    run_job(*job);
    std::unique_lock<std::mutex> lk(mutex_);
    done_cv_.wait(lk, [&] { return job->pending.load(std::memory_order_acquire) == 0; });
    current_.reset();
  }

 private:
  ThreadPool() : threads_(static_cast<int>(std::thread::hardware_concurrency())) {
    if (threads_ < 1) threads_ = 1;
    start();
  }

  void start() {
    stopping_ = false;
    for (int i = 0; i < threads_ - 1; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  void stop() {
    {
      std::lock_guard<std::mutex> lk(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
    workers_.clear();
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock<std::mutex> lk(mutex_);
        cv_.wait(lk, [&] { return stopping_ || (current_ && current_->id != seen); });
        if (stopping_) return;
        job = current_;
        seen = job->id;
      }
      run_job(*job);
    }
  }

  void run_job(Job& job) {
    for (;;) {
      int chunk = job.next.fetch_add(1, std::memory_order_relaxed);
      if (chunk >= job.total) break;
      (*job.fn)(chunk);
      if (job.pending.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lk(mutex_);
        done_cv_.notify_all();
      }
    }
  }

  int threads_ = 1;
  std::vector<std::thread> workers_;
  std::mutex api_mutex_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::shared_ptr<Job> current_;
  uint64_t job_counter_ = 0;
  bool stopping_ = false;
};

}  // namespace xmlp
