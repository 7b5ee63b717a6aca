#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kinhier/partitions.hpp"
#include "kinhier/state_space.hpp"

namespace kinhier {

namespace detail {

// Value at `flat` of the product over blocks of in_{|B|} evaluated on the
// block's slots in ascending order.
inline double block_product_value(const SequenceVector& in,
                                  const std::vector<std::vector<int>>& blocks,
                                  const int* digits, int K) {
  double prod = 1.0;
  std::array<int, TensorFunction::kOrderCap> sub{};
  for (const auto& block : blocks) {
    const int m = static_cast<int>(block.size());
    for (int i = 0; i < m; ++i) sub[i] = digits[block[static_cast<size_t>(i)]];
    prod *= in.component(m).values()[encode_multi(sub.data(), m, K)];
  }
  return prod;
}

/// Core of every cluster-expansion style transform: component s of the output
/// is the sum over partitions of {1..s} of coeff(|P|) times the product of
/// input components over blocks.  coeff ≡ 1 gives the expansion, the signed
/// Moebius coefficients give its inverse.
inline SequenceVector partition_sum_transform(const SequenceVector& in,
                                              bool signed_moebius) {
  SequenceVector out(in.space(), in.kind(), in.s_max());
  out.component(0).values()[0] = 1.0;  // order-0 slot unused by the transform
  const int K = in.space()->flat_count();
  std::array<int, TensorFunction::kOrderCap> digits{};
  for (int s = 1; s <= in.s_max(); ++s) {
    Vec acc = Vec::Zero(ipow(K, s));
    for_each_partition(s, [&](const Partition& p) {
      const int k = p.block_count();
      double coeff = 1.0;
      if (signed_moebius) {
        coeff = (k % 2 == 1) ? 1.0 : -1.0;
        coeff *= static_cast<double>(factorial_u64(k - 1));
      }
      for (std::int64_t f = 0; f < acc.size(); ++f) {
        decode_multi(f, s, K, digits.data());
        acc[f] += coeff * block_product_value(in, p.blocks, digits.data(), K);
      }
    });
    out.component(s).values() = std::move(acc);
  }
  return out;
}

}  // namespace detail

/// Marginal states from correlation factors: f_s = sum over partitions of the
/// product of g_{|block|} over blocks.
inline SequenceVector cluster_expand(const SequenceVector& g) {
  return detail::partition_sum_transform(g, false);
}

/// Correlation factors from marginal states: the Moebius inverse
/// g_s = sum over partitions of (-1)^{|P|-1}(|P|-1)! times block products.
inline SequenceVector cluster_invert(const SequenceVector& f) {
  return detail::partition_sum_transform(f, true);
}

enum class DressingDirection { forward, inverse };

/// The same expansion/inversion pair applied between the two correlation
/// sequences of the dressing relation g_s = sum_P prod g~_{|block|}.
inline SequenceVector correlation_dressing_transform(const SequenceVector& g,
                                                     DressingDirection dir) {
  return dir == DressingDirection::forward ? cluster_expand(g)
                                           : cluster_invert(g);
}

}  // namespace kinhier
