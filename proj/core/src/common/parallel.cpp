#include "segforge/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace segforge {
namespace {

std::size_t threads_from_env() {
  if (const char* env = std::getenv("SEGFORGE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return 1;
}

thread_local bool t_inside_parallel = false;

// Fixed-size pool. One job at a time; the calling thread runs chunk 0.
class Pool {
 public:
  explicit Pool(std::size_t workers) {
    for (std::size_t i = 0; i < workers; ++i) {
      threads_.emplace_back([this, i] { loop(i + 1); });
    }
  }

  ~Pool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
      ++generation_;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::size_t size() const { return threads_.size() + 1; }

  void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    std::unique_lock lock(mutex_);
    body_ = &body;
    n_ = n;
    pending_ = threads_.size();
    error_ = nullptr;
    ++generation_;
    lock.unlock();
    wake_.notify_all();

    std::exception_ptr local;
    try {
      run_chunk(0);
    } catch (...) {
      local = std::current_exception();
    }

    lock.lock();
    done_.wait(lock, [this] { return pending_ == 0; });
    body_ = nullptr;
    if (local) std::rethrow_exception(local);
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void run_chunk(std::size_t index) {
    const std::size_t parts = size();
    const std::size_t begin = n_ * index / parts;
    const std::size_t end = n_ * (index + 1) / parts;
    if (begin < end) (*body_)(begin, end);
  }

  void loop(std::size_t index) {
    t_inside_parallel = true;
    std::size_t seen = 0;
    for (;;) {
      std::unique_lock lock(mutex_);
      wake_.wait(lock, [&] { return generation_ != seen; });
      seen = generation_;
      if (stop_) return;
      lock.unlock();
      std::exception_ptr err;
      try {
        run_chunk(index);
      } catch (...) {
        err = std::current_exception();
      }
      lock.lock();
      if (err && !error_) error_ = err;
      if (--pending_ == 0) done_.notify_one();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t, std::size_t)>* body_ = nullptr;
  std::size_t n_ = 0;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

std::mutex g_config_mutex;
std::size_t g_threads = threads_from_env();
std::unique_ptr<Pool> g_pool;

}  // namespace

std::size_t num_threads() {
  std::lock_guard lock(g_config_mutex);
  return g_threads;
}

void set_num_threads(std::size_t n) {
  std::lock_guard lock(g_config_mutex);
  g_threads = std::max<std::size_t>(1, n);
  g_pool.reset();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  Pool* pool = nullptr;
  {
    std::lock_guard lock(g_config_mutex);
    if (g_threads > 1 && n > 1 && !t_inside_parallel) {
      if (!g_pool) g_pool = std::make_unique<Pool>(g_threads - 1);
      pool = g_pool.get();
    }
  }
  if (pool == nullptr) {
    body(0, n);
    return;
  }
  t_inside_parallel = true;
  try {
    pool->run(n, body);
  } catch (...) {
    t_inside_parallel = false;
    throw;
  }
  t_inside_parallel = false;
}

}  // namespace segforge
