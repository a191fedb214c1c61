#pragma once

namespace subpop::parallel {

enum class ExecMode { serial, openmp };

// Fixed shard count for every Monte-Carlo kernel. Work is pre-split by shard
// index (not by thread), each shard owns an RNG stream and an output slot, and
// partial results are combined in shard order — so the OpenMP path reproduces
// the serial path bit for bit at any thread count.
inline constexpr int kShardCount = 64;

template <typename F>
void for_each_shard(int shard_count, ExecMode mode, F&& fn) {
#ifdef _OPENMP
  if (mode == ExecMode::openmp) {
#pragma omp parallel for schedule(static)
    for (int s = 0; s < shard_count; ++s) fn(s);
    return;
  }
#else
  (void)mode;
#endif
  for (int s = 0; s < shard_count; ++s) fn(s);
}

// Draws handled by shard s when n total draws are split across `shards`.
inline long long shard_quota(long long n, int shards, int s) {
  const long long base = n / shards;
  const long long extra = n % shards;
  return base + (s < extra ? 1 : 0);
}

}  // namespace subpop::parallel
