#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace pdgibbs::parallel {

/// Worker count for parallel loops. Initialized from PDGIBBS_WORKERS when set,
/// otherwise from the OpenMP default.
int workers();
void set_workers(int n);

/// Loops shorter than this run inline on the calling thread.
std::size_t min_grain();
void set_min_grain(std::size_t n);

bool in_parallel_region();

/// Runs body(i) for i in [0, n). Bodies must write disjoint state; the first
/// exception thrown by any body is rethrown after the loop.
template <class Body>
void for_each_index(std::size_t n, Body&& body) {
  const int w = workers();
  if (w <= 1 || n < min_grain() || in_parallel_region()) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for num_threads(w) schedule(static)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

/// Runs task(i) for i in [0, n) with one index per scheduling unit, for a few
/// coarse tasks such as independent chains. Same exception contract.
template <class Task>
void for_each_task(std::size_t n, Task&& task) {
  const int w = workers();
  if (w <= 1 || n < 2 || in_parallel_region()) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for num_threads(w) schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      task(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

/// Restores the previous worker settings on scope exit.
class ScopedWorkers {
 public:
  ScopedWorkers(int workers, std::size_t grain);
  ~ScopedWorkers();
  ScopedWorkers(const ScopedWorkers&) = delete;
  ScopedWorkers& operator=(const ScopedWorkers&) = delete;

 private:
  int saved_workers_;
  std::size_t saved_grain_;
};

}  // namespace pdgibbs::parallel
