#pragma once

// Deterministic parallel reductions.  Work is cut into fixed-size chunks whose
// partial sums are combined by a pairwise tree, so results are bit-identical
// for any thread count.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace qlmpa {

inline constexpr std::size_t kReductionChunk = 4096;

/// Worker count, read once from QLMPA_NUM_THREADS (default 1).
inline int num_threads() {
  static const int n = [] {
    if (const char* env = std::getenv("QLMPA_NUM_THREADS")) {
      try {
        return std::clamp(std::stoi(env), 1, 256);
      } catch (...) {
      }
    }
    return 1;
  }();
  return n;
}

inline double pairwise_sum(std::vector<double> values) {
  if (values.empty()) return 0.0;
  for (std::size_t width = 1; width < values.size(); width *= 2)
    for (std::size_t i = 0; i + width < values.size(); i += 2 * width) values[i] += values[i + width];
  return values[0];
}

/// Runs body(chunk_begin, chunk_end) over [0, n) in fixed chunks, possibly
/// on several threads.
template <class Body>
void for_each_chunk(std::size_t n, Body&& body) {
  const std::size_t chunks = (n + kReductionChunk - 1) / kReductionChunk;
  const int threads = static_cast<int>(std::min<std::size_t>(num_threads(), chunks));
  auto run = [&](std::size_t c) { body(c * kReductionChunk, std::min(n, (c + 1) * kReductionChunk)); };
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t c; (c = next.fetch_add(1)) < chunks;) run(c);
    });
}

/// Sum of term(i) for i in [0, n).
template <class Term>
double deterministic_sum(std::size_t n, Term&& term) {
  const std::size_t chunks = (n + kReductionChunk - 1) / kReductionChunk;
  std::vector<double> partial(chunks, 0.0);
  for_each_chunk(n, [&](std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += term(i);
    partial[begin / kReductionChunk] = s;
  });
  return pairwise_sum(std::move(partial));
}

}  // namespace qlmpa
