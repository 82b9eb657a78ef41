#include "sdelab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sdelab {
namespace {
std::atomic<std::size_t> g_default_threads{0};
}

std::size_t default_threads() noexcept {
  const std::size_t n = g_default_threads.load();
  if (n) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_default_threads(std::size_t n) noexcept { g_default_threads.store(n); }

void parallel_for_batches(std::size_t n_batches, std::size_t threads,
                          const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = default_threads();
  threads = std::min(threads, n_batches);
  if (threads <= 1) {
    for (std::size_t b = 0; b < n_batches; ++b) body(b);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex err_mu;

  auto worker = [&] {
    for (;;) {
      if (failed.load(std::memory_order_relaxed)) return;
      const std::size_t b = next.fetch_add(1);
      if (b >= n_batches) return;
      try {
        body(b);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace sdelab
