#ifndef LATREG_PARALLEL_HPP
#define LATREG_PARALLEL_HPP

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace latreg {

inline int default_thread_count() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Keeps freed blocks pooled in the process instead of returning them to the
// kernel. The optimizer allocates and frees megabyte-sized temporaries every
// step; with glibc defaults that causes constant mmap/munmap traffic and
// page-fault stalls. Call once at startup; idempotent, safe everywhere.
void tune_allocator();

// Fork-join loop over [begin, end). Iterations must be independent and must
// not make the result depend on the partitioning; callers achieve this by
// writing each iteration's output to its own slot.
inline void parallel_for(std::int64_t begin, std::int64_t end, int threads,
                         const std::function<void(std::int64_t)>& body) {
  const std::int64_t n = end - begin;
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (std::int64_t i = begin; i < end; ++i) body(i);
    return;
  }
  const int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  // static block partition: worker w handles [begin + w*chunk, ...)
  const std::int64_t chunk = (n + workers - 1) / workers;
  auto run = [&, begin](int w) {
    const std::int64_t lo = begin + w * chunk;
    const std::int64_t hi = std::min(end, lo + chunk);
    for (std::int64_t i = lo; i < hi; ++i) body(i);
  };
  for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
}

}  // namespace latreg

#endif  // LATREG_PARALLEL_HPP
