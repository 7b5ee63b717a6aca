#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kinhier/errors.hpp"

namespace kinhier {

/// Set partitions of {0,...,n-1} in canonical form: blocks ordered by their
/// least element, elements ascending inside each block.
struct Partition {
  std::vector<std::vector<int>> blocks;

  int block_count() const { return static_cast<int>(blocks.size()); }
};

inline constexpr int kPartitionGroundCap = 10;

/// Streams the partitions of {0,...,n-1} in restricted-growth-string
/// lexicographic order.  The order is deterministic: the first partition is
/// the single block, the last is all singletons.  Single consumer.
class PartitionStream {
 public:
  explicit PartitionStream(int n) : n_(n), rgs_(n, 0), prefix_max_(n, 0) {
    if (n < 1) throw cap_error("partition ground set must be nonempty");
    if (n > kPartitionGroundCap)
      throw cap_error("partition ground set exceeds cap " +
                      std::to_string(kPartitionGroundCap));
  }

  std::optional<Partition> next() {
    if (done_) return std::nullopt;
    Partition out = materialize();
    advance();
    return out;
  }

 private:
  Partition materialize() const {
    int k = prefix_max_[n_ - 1] + 1;
    Partition p;
    p.blocks.assign(k, {});
    for (int i = 0; i < n_; ++i) p.blocks[rgs_[i]].push_back(i);
    return p;
  }

  void advance() {
    // rightmost position whose digit may grow; digit i is valid up to
    // prefix_max_[i-1] + 1
    for (int i = n_ - 1; i >= 1; --i) {
      if (rgs_[i] <= prefix_max_[i - 1]) {
        ++rgs_[i];
        prefix_max_[i] = std::max(prefix_max_[i - 1], rgs_[i]);
        for (int j = i + 1; j < n_; ++j) {
          rgs_[j] = 0;
          prefix_max_[j] = prefix_max_[j - 1];
        }
        return;
      }
    }
    done_ = true;
  }

  int n_;
  std::vector<int> rgs_;
  std::vector<int> prefix_max_;
  bool done_ = false;
};

template <class F>
inline void for_each_partition(int n, F&& fn) {
  PartitionStream stream(n);
  while (auto p = stream.next()) fn(*p);
}

inline std::vector<Partition> enumerate_partitions(int n) {
  std::vector<Partition> out;
  for_each_partition(n, [&](const Partition& p) { out.push_back(p); });
  return out;
}

inline constexpr int kCountingDomainCap = 20;

inline std::uint64_t factorial_u64(int n) {
  if (n < 0 || n > kCountingDomainCap)
    throw cap_error("factorial domain is 0..20");
  std::uint64_t r = 1;
  for (int i = 2; i <= n; ++i) r *= static_cast<std::uint64_t>(i);
  return r;
}

/// Stirling numbers of the second kind via the triangle recurrence
/// S(n,k) = k*S(n-1,k) + S(n-1,k-1).
inline std::uint64_t stirling2(int n, int k) {
  if (n < 0 || n > kCountingDomainCap) throw cap_error("stirling2 domain is 0..20");
  if (k < 0 || k > n) return 0;
  if (n == 0) return k == 0 ? 1 : 0;
  if (k == 0) return 0;
  std::vector<std::uint64_t> row(static_cast<size_t>(n) + 1, 0);
  row[0] = 1;  // S(0,0)
  for (int m = 1; m <= n; ++m) {
    for (int j = std::min(m, k); j >= 1; --j)
      row[j] = static_cast<std::uint64_t>(j) * row[j] + row[j - 1];
    row[0] = 0;
  }
  return row[k];
}

inline std::uint64_t bell_number(int n) {
  if (n < 0 || n > kCountingDomainCap) throw cap_error("bell domain is 0..20");
  std::uint64_t sum = 0;
  for (int k = 0; k <= n; ++k) sum += stirling2(n, k);
  return sum;
}

/// Sum over all partitions of an n-set of (|P|-1)!; this is the growth factor
/// of one cumulant order in the hierarchy norm estimates.
inline std::uint64_t partition_weight_sum(int n) {
  if (n < 1 || n > kCountingDomainCap)
    throw cap_error("partition_weight_sum domain is 1..20");
  std::uint64_t sum = 0;
  for (int k = 1; k <= n; ++k) sum += stirling2(n, k) * factorial_u64(k - 1);
  return sum;
}

/// A ground set of tensor slots split into one fused cluster plus distinct
/// singleton slots.  Partitions of the fused set treat the cluster as a single
/// pseudo-element; declusterization expands it back to its slots.
struct ClusterSpec {
  std::vector<int> cluster;     // nonempty
  std::vector<int> singletons;  // disjoint from cluster, may be empty

  int pseudo_count() const { return 1 + static_cast<int>(singletons.size()); }

  /// All slots, ascending; realized cumulant operators order their tensor
  /// axes by this.
  std::vector<int> ground() const {
    std::vector<int> g = cluster;
    g.insert(g.end(), singletons.begin(), singletons.end());
    std::sort(g.begin(), g.end());
    return g;
  }

  void validate() const {
    if (cluster.empty()) throw cap_error("cluster slot set must be nonempty");
    std::vector<int> g = ground();
    std::vector<int> sorted = g;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw cap_error("cluster and singleton slots must be disjoint");
  }
};

/// Enumerates partitions of the pseudo-element set of `spec` and hands each
/// one over declusterized: fn(blocks) where every block is the sorted union
/// of the cluster slots (if the block holds the cluster) and singleton slots.
template <class F>
inline void for_each_cluster_partition(const ClusterSpec& spec, F&& fn) {
  spec.validate();
  const int m = spec.pseudo_count();
  for_each_partition(m, [&](const Partition& p) {
    std::vector<std::vector<int>> blocks(p.blocks.size());
    for (size_t b = 0; b < p.blocks.size(); ++b) {
      for (int e : p.blocks[b]) {
        if (e == 0)
          blocks[b].insert(blocks[b].end(), spec.cluster.begin(),
                           spec.cluster.end());
        else
          blocks[b].push_back(spec.singletons[static_cast<size_t>(e) - 1]);
      }
      std::sort(blocks[b].begin(), blocks[b].end());
    }
    fn(blocks);
  });
}

}  // namespace kinhier
