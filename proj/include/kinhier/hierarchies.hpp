#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "kinhier/dynamics.hpp"
#include "kinhier/partitions.hpp"
#include "kinhier/state_space.hpp"

namespace kinhier {

/// Cumulant of semigroups realized as a dense operator on the ground slots
/// of its cluster specification: the signed partition sum of products of
/// lifted evolutions, order 1 + (number of singletons).
struct CumulantOperator {
  ClusterSpec clusters;
  double t = 0.0;
  Side side = Side::observable;
  int ground_order = 0;
  Mat op;

  int order() const { return clusters.pseudo_count(); }
  Vec apply(const Vec& x) const { return op * x; }
};

namespace detail {

// Product over blocks of per-block operators, assembled entrywise; valid
// because the blocks cover disjoint slot sets.
inline Mat assemble_block_product(const std::vector<const Mat*>& ops,
                                  const std::vector<std::vector<int>>& positions,
                                  int order, int K) {
  const std::int64_t dim = ipow(K, order);
  Mat out(dim, dim);
  std::array<int, TensorFunction::kOrderCap> dr{}, dc{}, sub{};
  for (std::int64_t r = 0; r < dim; ++r) {
    decode_multi(r, order, K, dr.data());
    for (std::int64_t c = 0; c < dim; ++c) {
      decode_multi(c, order, K, dc.data());
      double prod = 1.0;
      for (size_t blk = 0; blk < ops.size(); ++blk) {
        const auto& pos = positions[blk];
        const int m = static_cast<int>(pos.size());
        for (int i = 0; i < m; ++i) sub[static_cast<size_t>(i)] =
            dr[static_cast<size_t>(pos[static_cast<size_t>(i)])];
        const std::int64_t rr = encode_multi(sub.data(), m, K);
        for (int i = 0; i < m; ++i) sub[static_cast<size_t>(i)] =
            dc[static_cast<size_t>(pos[static_cast<size_t>(i)])];
        prod *= (*ops[blk])(rr, encode_multi(sub.data(), m, K));
        if (prod == 0.0) break;
      }
      out(r, c) = prod;
    }
  }
  return out;
}

}  // namespace detail

/// Signed partition sum over the pseudo-elements of `spec`: the cluster acts
/// as one element, every singleton as its own.  Observable side composes the
/// forward semigroups, state side the adjoint ones.
inline CumulantOperator cumulant(const JumpDynamics& dyn, double t,
                                 ClusterSpec spec, Side side, double epsilon) {
  spec.validate();
  const std::vector<int> ground = spec.ground();
  const int order = static_cast<int>(ground.size());
  if (order > TensorFunction::kOrderCap)
    throw cap_error("cumulant ground order exceeds cap");
  const int K = dyn.space().flat_count();
  const std::int64_t dim = ipow(K, order);
  if (dim > kDenseDimCap) throw cap_error("cumulant dimension exceeds cap");
  std::vector<int> position(static_cast<size_t>(ground.back()) + 1, -1);
  for (int i = 0; i < order; ++i)
    position[static_cast<size_t>(ground[static_cast<size_t>(i)])] = i;

  CumulantOperator out;
  out.clusters = spec;
  out.t = t;
  out.side = side;
  out.ground_order = order;
  out.op = Mat::Zero(dim, dim);
  for_each_cluster_partition(spec, [&](const std::vector<std::vector<int>>& blocks) {
    const int k = static_cast<int>(blocks.size());
    double coeff = (k % 2 == 1) ? 1.0 : -1.0;
    coeff *= static_cast<double>(factorial_u64(k - 1));
    std::vector<const Mat*> ops;
    std::vector<std::shared_ptr<const Mat>> keep_alive;
    std::vector<std::vector<int>> pos_blocks;
    ops.reserve(blocks.size());
    for (const auto& blk : blocks) {
      auto ev = dyn.evolution(static_cast<int>(blk.size()), t, epsilon, side);
      keep_alive.push_back(ev);
      ops.push_back(ev.get());
      std::vector<int> pos;
      pos.reserve(blk.size());
      for (int e : blk) pos.push_back(position[static_cast<size_t>(e)]);
      pos_blocks.push_back(std::move(pos));
    }
    out.op += coeff * detail::assemble_block_product(ops, pos_blocks, order, K);
  });
  return out;
}

namespace detail {

inline std::vector<int> bit_subset(unsigned mask, int s) {
  std::vector<int> out;
  for (int j = 0; j < s; ++j)
    if (mask & (1u << j)) out.push_back(j);
  return out;
}

}  // namespace detail

/// Dual hierarchy group on truncated observable sequences: component s sums,
/// over every proper subset X of its slots, the order-(1+|X|) cumulant applied
/// to b_{s-|X|} extended constant in the X slots.  The subset sum realizes the
/// 1/n!-weighted ordered-tuple sum exactly, the cumulant being a set function.
inline SequenceVector dual_bbgky_evolve(const JumpDynamics& dyn,
                                        const SequenceVector& b0, double t,
                                        double epsilon) {
  if (b0.kind() != Kind::observable)
    throw cap_error("dual hierarchy expects an observable sequence");
  SequenceVector out(b0.space(), Kind::observable, b0.s_max());
  out.component(0).values() = b0.component(0).values();
  for (int s = 1; s <= b0.s_max(); ++s) {
    Vec acc = Vec::Zero(ipow(dyn.space().flat_count(), s));
    for (unsigned mask = 0; mask + 1 < (1u << s); ++mask) {
      const std::vector<int> X = detail::bit_subset(mask, s);
      std::vector<int> complement;
      for (int j = 0; j < s; ++j)
        if (!(mask & (1u << j))) complement.push_back(j);
      ClusterSpec spec;
      spec.cluster = complement;
      spec.singletons = X;
      auto cum = cumulant(dyn, t, spec, Side::observable, epsilon);
      auto ext = extend_constant(b0.component(s - static_cast<int>(X.size())),
                                 complement, s);
      acc += cum.op * ext.values();
    }
    out.component(s).values() = std::move(acc);
  }
  return out;
}

/// Hierarchy group on truncated state sequences: component s sums, for each
/// n up to the truncation, 1/n! times the kept-slot marginal of the state
/// cumulant with cluster (1..s) and singletons (s+1..s+n) applied to f_{s+n}.
inline SequenceVector bbgky_evolve(const JumpDynamics& dyn,
                                   const SequenceVector& f0, double t,
                                   double epsilon) {
  if (f0.kind() != Kind::state)
    throw cap_error("hierarchy expects a state sequence");
  const int N = f0.s_max();
  SequenceVector out(f0.space(), Kind::state, N);
  out.component(0).values() = f0.component(0).values();
  for (int s = 1; s <= N; ++s) {
    Vec acc = Vec::Zero(ipow(dyn.space().flat_count(), s));
    double inv_fact = 1.0;
    for (int n = 0; n <= N - s; ++n) {
      if (n > 0) inv_fact /= n;
      ClusterSpec spec;
      for (int j = 0; j < s; ++j) spec.cluster.push_back(j);
      for (int j = 0; j < n; ++j) spec.singletons.push_back(s + j);
      auto cum = cumulant(dyn, t, spec, Side::state, epsilon);
      TensorFunction moved(f0.space(), s + n, Kind::state,
                           cum.op * f0.component(s + n).values());
      acc += inv_fact * marginal_by_integration(moved, s).values();
    }
    out.component(s).values() = std::move(acc);
  }
  return out;
}

/// (a+ b)_s = sum_j b_{s-1} with argument j omitted; order 0 output vanishes.
inline SequenceVector creation_op(const SequenceVector& b) {
  SequenceVector out(b.space(), b.kind(), b.s_max());
  for (int s = 1; s <= b.s_max(); ++s) {
    Vec acc = Vec::Zero(out.component(s).values().size());
    for (int j = 0; j < s; ++j) {
      std::vector<int> slots;
      for (int i = 0; i < s; ++i)
        if (i != j) slots.push_back(i);
      acc += extend_constant(b.component(s - 1), slots, s).values();
    }
    out.component(s).values() = std::move(acc);
  }
  return out;
}

/// (a f)_s = weighted integral of f_{s+1} over its last argument; the top
/// component has nothing above it and vanishes.
inline SequenceVector annihilation_op(const SequenceVector& f) {
  SequenceVector out(f.space(), f.kind(), f.s_max());
  out.component(0).values().setZero();
  for (int s = 0; s < f.s_max(); ++s)
    out.component(s).values() = marginal_by_integration(f.component(s + 1), s).values();
  return out;
}

namespace detail {

inline void seq_axpy(double alpha, const SequenceVector& x, SequenceVector& y) {
  for (int s = 0; s <= y.s_max(); ++s)
    y.component(s).values() += alpha * x.component(s).values();
}

}  // namespace detail

/// e^{sign a+} on a truncated sequence; the series terminates because the
/// creation operator is nilpotent of degree s_max + 1.
inline SequenceVector exp_creation(const SequenceVector& b, double sign) {
  SequenceVector acc = b;
  SequenceVector term = b;
  for (int k = 1; k <= b.s_max(); ++k) {
    term = creation_op(term);
    for (int s = 0; s <= b.s_max(); ++s)
      term.component(s).values() *= sign / k;
    detail::seq_axpy(1.0, term, acc);
  }
  return acc;
}

/// e^{sign a} on a truncated sequence, likewise a terminating series.
inline SequenceVector exp_annihilation(const SequenceVector& f, double sign) {
  SequenceVector acc = f;
  SequenceVector term = f;
  for (int k = 1; k <= f.s_max(); ++k) {
    term = annihilation_op(term);
    for (int s = 0; s <= f.s_max(); ++s)
      term.component(s).values() *= sign / k;
    detail::seq_axpy(1.0, term, acc);
  }
  return acc;
}

/// Componentwise generator: (Lambda x)_s = Lambda_s x_s with the side chosen
/// by the sequence kind; the order-0 component is annihilated.
inline SequenceVector apply_diag_generator(const JumpDynamics& dyn,
                                           const SequenceVector& x,
                                           double epsilon) {
  const Side side = x.kind() == Kind::observable ? Side::observable : Side::state;
  SequenceVector out(x.space(), x.kind(), x.s_max());
  for (int s = 1; s <= x.s_max(); ++s)
    out.component(s).values() =
        dyn.generator(s, epsilon, side).matrix * x.component(s).values();
  return out;
}

/// Generator of the dual hierarchy group: (B b)_s = Lambda_s b_s plus the
/// interaction terms coupling down one order, where the conditioning slot of
/// each two-body operator carries the omitted argument.
inline SequenceVector generator_B(const JumpDynamics& dyn,
                                  const SequenceVector& b, double epsilon) {
  if (b.kind() != Kind::observable)
    throw cap_error("generator B expects an observable sequence");
  SequenceVector out = apply_diag_generator(dyn, b, epsilon);
  if (epsilon == 0.0) return out;
  const Mat L2 = two_body_generator(dyn.kernels(), dyn.space(), Side::observable);
  for (int s = 2; s <= b.s_max(); ++s) {
    Vec acc = Vec::Zero(out.component(s).values().size());
    for (int j = 0; j < s; ++j) {
      std::vector<int> slots;
      for (int i = 0; i < s; ++i)
        if (i != j) slots.push_back(i);
      const Vec ext = extend_constant(b.component(s - 1), slots, s).values();
      for (int i = 0; i < s; ++i)
        if (i != j)
          acc += lift_operator(L2, {i, j}, s, dyn.space()) * ext;
    }
    out.component(s).values() += epsilon * acc;
  }
  return out;
}

/// Generator of the hierarchy group on states: (B* f)_s = Lambda*_s f_s plus
/// the integrated two-body coupling to f_{s+1}; the jumping slot stays among
/// the kept entities, the conditioning slot is integrated out.
inline SequenceVector generator_Bstar(const JumpDynamics& dyn,
                                      const SequenceVector& f, double epsilon) {
  if (f.kind() != Kind::state)
    throw cap_error("generator B* expects a state sequence");
  SequenceVector out = apply_diag_generator(dyn, f, epsilon);
  if (epsilon == 0.0) return out;
  const Mat L2 = two_body_generator(dyn.kernels(), dyn.space(), Side::state);
  for (int s = 1; s < f.s_max(); ++s) {
    Vec acc = Vec::Zero(out.component(s).values().size());
    for (int i = 0; i < s; ++i) {
      const Vec moved =
          lift_operator(L2, {i, s}, s + 1, dyn.space()) * f.component(s + 1).values();
      TensorFunction g(f.space(), s + 1, Kind::state, moved);
      acc += marginal_by_integration(g, s).values();
    }
    out.component(s).values() += epsilon * acc;
  }
  return out;
}

}  // namespace kinhier
