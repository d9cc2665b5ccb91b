#include "pdgibbs/parallel.hpp"

#include <omp.h>

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>

namespace pdgibbs::parallel {
namespace {

int initial_workers() {
  if (const char* env = std::getenv("PDGIBBS_WORKERS"); env != nullptr && *env != '\0') {
    int n = 0;
    const char* end = env + std::strlen(env);
    auto [ptr, ec] = std::from_chars(env, end, n);
    if (ec == std::errc{} && ptr == end && n > 0) return n;
  }
  return omp_get_max_threads();
}

std::atomic<int>& worker_setting() {
  static std::atomic<int> value{initial_workers()};
  return value;
}

std::atomic<std::size_t> grain_setting{2048};

}  // namespace

int workers() { return worker_setting().load(std::memory_order_relaxed); }

void set_workers(int n) { worker_setting().store(n < 1 ? 1 : n, std::memory_order_relaxed); }

std::size_t min_grain() { return grain_setting.load(std::memory_order_relaxed); }

void set_min_grain(std::size_t n) { grain_setting.store(n, std::memory_order_relaxed); }

bool in_parallel_region() { return omp_in_parallel() != 0; }

ScopedWorkers::ScopedWorkers(int workers_, std::size_t grain)
    : saved_workers_(workers()), saved_grain_(min_grain()) {
  set_workers(workers_);
  set_min_grain(grain);
}

ScopedWorkers::~ScopedWorkers() {
  set_workers(saved_workers_);
  set_min_grain(saved_grain_);
}

}  // namespace pdgibbs::parallel
