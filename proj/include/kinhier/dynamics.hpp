#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <tuple>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "kinhier/errors.hpp"
#include "kinhier/kernels.hpp"
#include "kinhier/state_space.hpp"

namespace kinhier {

enum class Side { observable, state };

inline const char* to_string(Side s) {
  return s == Side::observable ? "observable" : "state";
}

/// Which parts of the generator participate.
struct InteractionMask {
  bool one_body = true;
  bool two_body = true;

  static InteractionMask both() { return {true, true}; }
  static InteractionMask one_body_only() { return {true, false}; }
  static InteractionMask two_body_only() { return {false, true}; }
  unsigned bits() const {
    return (one_body ? 1u : 0u) | (two_body ? 2u : 0u);
  }
};

/// One-body jump generator on a single entity, K x K.  Observable side:
/// (Lb)(u) = a1(u)[sum_v w(v)A1(v,u) b(v) - b(u)]; state side is its adjoint
/// under the w-weighted pairing.
inline Mat one_body_generator(const KernelSet& k, const EntitySpace& space,
                              Side side) {
  const int K = space.flat_count();
  Mat L = Mat::Zero(K, K);
  if (side == Side::observable) {
    for (int u = 0; u < K; ++u) {
      for (int v = 0; v < K; ++v) L(u, v) += k.a1(u) * space.weight(v) * k.A1(v, u);
      L(u, u) -= k.a1(u);
    }
  } else {
    for (int u = 0; u < K; ++u) {
      for (int v = 0; v < K; ++v) L(u, v) += space.weight(v) * k.A1(u, v) * k.a1(v);
      L(u, u) -= k.a1(u);
    }
  }
  return L;
}

/// Two-body jump generator on an ordered pair, K^2 x K^2; the first factor is
/// the jumping entity, the second conditions the rates and densities.
inline Mat two_body_generator(const KernelSet& k, const EntitySpace& space,
                              Side side) {
  const int K = space.flat_count();
  Mat L = Mat::Zero(K * K, K * K);
  auto idx = [K](int u1, int u2) { return u1 * K + u2; };
  if (side == Side::observable) {
    for (int u1 = 0; u1 < K; ++u1)
      for (int u2 = 0; u2 < K; ++u2) {
        const int r = idx(u1, u2);
        for (int v = 0; v < K; ++v)
          L(r, idx(v, u2)) += k.a2(u1, u2) * space.weight(v) * k.A2(v, u1, u2);
        L(r, r) -= k.a2(u1, u2);
      }
  } else {
    for (int u1 = 0; u1 < K; ++u1)
      for (int u2 = 0; u2 < K; ++u2) {
        const int r = idx(u1, u2);
        for (int v = 0; v < K; ++v)
          L(r, idx(v, u2)) += space.weight(v) * k.A2(u1, v, u2) * k.a2(v, u2);
        L(r, r) -= k.a2(u1, u2);
      }
  }
  return L;
}

struct GeneratorMatrix {
  int order = 0;
  double epsilon = 0.0;
  Side side = Side::observable;
  InteractionMask mask;
  Mat matrix;
};

inline constexpr std::int64_t kDenseDimCap = 4096;

/// Full n-entity generator: sum of lifted one-body parts plus epsilon times
/// the sum over ordered pairs of lifted two-body parts.
inline GeneratorMatrix build_generator(const KernelSet& k,
                                       const EntitySpace& space, int n,
                                       double epsilon, Side side,
                                       InteractionMask mask =
                                           InteractionMask::both()) {
  if (n < 1) throw cap_error("generator order must be >= 1");
  const std::int64_t dim = ipow(space.flat_count(), n);
  if (dim > kDenseDimCap)
    throw cap_error("dense generator dimension " + std::to_string(dim) +
                    " exceeds cap " + std::to_string(kDenseDimCap));
  GeneratorMatrix g;
  g.order = n;
  g.epsilon = epsilon;
  g.side = side;
  g.mask = mask;
  g.matrix = Mat::Zero(dim, dim);
  if (mask.one_body) {
    const Mat L1 = one_body_generator(k, space, side);
    for (int i = 0; i < n; ++i) g.matrix += lift_operator(L1, {i}, n, space);
  }
  if (mask.two_body && epsilon != 0.0) {
    const Mat L2 = two_body_generator(k, space, side);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) g.matrix += epsilon * lift_operator(L2, {i, j}, n, space);
  }
  return g;
}

/// Observable-side generator of Eq. form a1[.] + eps sum a2[..].
inline GeneratorMatrix build_lambda(const KernelSet& k, const EntitySpace& space,
                                    int n, double epsilon,
                                    InteractionMask mask = InteractionMask::both()) {
  return build_generator(k, space, n, epsilon, Side::observable, mask);
}

/// State-side (adjoint) generator; satisfies <Lb, f>_w = <b, L*f>_w.
inline GeneratorMatrix adjoint_generator(const KernelSet& k,
                                         const EntitySpace& space, int n,
                                         double epsilon,
                                         InteractionMask mask =
                                             InteractionMask::both()) {
  return build_generator(k, space, n, epsilon, Side::state, mask);
}

/// Dense matrix exponential, scaling-and-squaring with Pade approximation.
inline Mat matrix_exponential(const Mat& A) { return A.exp(); }

/// Matrix-free application of the n-entity generator to a dense vector;
/// the route for dimensions past the dense cap.
inline Vec apply_generator_action(const KernelSet& k, const EntitySpace& space,
                                  int n, double epsilon, Side side,
                                  InteractionMask mask, const Vec& x) {
  const int K = space.flat_count();
  Vec out = Vec::Zero(x.size());
  std::vector<int> d(static_cast<size_t>(n));
  const Mat L1 = mask.one_body ? one_body_generator(k, space, side) : Mat();
  const Mat L2 = (mask.two_body && epsilon != 0.0)
                     ? two_body_generator(k, space, side)
                     : Mat();
  for (std::int64_t f = 0; f < x.size(); ++f) {
    decode_multi(f, n, K, d.data());
    double acc = 0.0;
    if (mask.one_body) {
      for (int i = 0; i < n; ++i) {
        const std::int64_t stride = ipow(K, n - 1 - i);
        const std::int64_t base = f - d[static_cast<size_t>(i)] * stride;
        for (int v = 0; v < K; ++v)
          acc += L1(d[static_cast<size_t>(i)], v) * x[base + v * stride];
      }
    }
    if (mask.two_body && epsilon != 0.0) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          const std::int64_t stride = ipow(K, n - 1 - i);
          const std::int64_t base = f - d[static_cast<size_t>(i)] * stride;
          const int r = d[static_cast<size_t>(i)] * K + d[static_cast<size_t>(j)];
          for (int v = 0; v < K; ++v)
            acc += epsilon * L2(r, v * K + d[static_cast<size_t>(j)]) *
                   x[base + v * stride];
        }
    }
    out[f] = acc;
  }
  return out;
}

/// Action of e^{t Lambda} on a vector by sub-stepped truncated Taylor series
/// with running error control.
inline Vec evolve_action(const KernelSet& k, const EntitySpace& space, int n,
                         double epsilon, Side side, InteractionMask mask,
                         double t, Vec x, double tol = 1e-13) {
  // crude generator norm bound from the rate caps; fixes the substep count
  const double rate =
      2.0 * (n * k.a1_bound() +
             std::abs(epsilon) * n * std::max(0, n - 1) * k.a2_bound());
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(t) * rate / 0.5)));
  const double h = t / steps;
  for (int s = 0; s < steps; ++s) {
    Vec term = x;
    Vec acc = x;
    const double scale = 1.0 + acc.cwiseAbs().maxCoeff();
    for (int j = 1; j <= 80; ++j) {
      term = apply_generator_action(k, space, n, epsilon, side, mask, term);
      term *= h / j;
      acc += term;
      if (term.cwiseAbs().maxCoeff() <= tol * scale) break;
      if (j == 80) throw numeric_error("evolve_action: series did not settle");
    }
    x = std::move(acc);
  }
  return x;
}

/// Immutable dynamics context: one kernel set on one space, handing out
/// generators and cached dense semigroups e^{t Lambda}.  The cache is keyed
/// bit-exactly and safe for concurrent readers with atomic insertion.
class JumpDynamics {
 public:
  JumpDynamics(SpacePtr space, KernelSet kernels)
      : space_(std::move(space)), kernels_(std::move(kernels)) {
    if (kernels_.K() != space_->flat_count())
      throw cap_error("kernel tables sized for a different space");
  }

  const EntitySpace& space() const { return *space_; }
  const SpacePtr& space_ptr() const { return space_; }
  const KernelSet& kernels() const { return kernels_; }

  GeneratorMatrix generator(int n, double epsilon, Side side,
                            InteractionMask mask = InteractionMask::both()) const {
    return build_generator(kernels_, *space_, n, epsilon, side, mask);
  }

  /// Cached dense e^{t Lambda_n}; recomputation is bit-identical, therefore
  /// caching is transparent.
  std::shared_ptr<const Mat> evolution(int n, double t, double epsilon,
                                       Side side,
                                       InteractionMask mask =
                                           InteractionMask::both()) const {
    const Key key{n, side, mask.bits(), bits_of(epsilon), bits_of(t)};
    {
      std::shared_lock lock(mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    Mat op = matrix_exponential(t * generator(n, epsilon, side, mask).matrix);
    auto value = std::make_shared<const Mat>(std::move(op));
    std::unique_lock lock(mutex_);
    auto [it, inserted] = cache_.emplace(key, value);
    return it->second;  // first writer wins; identical by determinism
  }

  /// Applies e^{t Lambda_n} to a vector, dense route under the cap and
  /// matrix-free action past it.
  Vec apply_evolution(int n, double t, double epsilon, Side side, const Vec& x,
                      InteractionMask mask = InteractionMask::both()) const {
    if (ipow(space_->flat_count(), n) <= kDenseDimCap)
      return *evolution(n, t, epsilon, side, mask) * x;
    return evolve_action(kernels_, *space_, n, epsilon, side, mask, t, x);
  }

  size_t cache_size() const {
    std::shared_lock lock(mutex_);
    return cache_.size();
  }

 private:
  struct Key {
    int n;
    Side side;
    unsigned mask;
    std::uint64_t eps_bits;
    std::uint64_t t_bits;
    bool operator<(const Key& o) const {
      return std::tie(n, side, mask, eps_bits, t_bits) <
             std::tie(o.n, o.side, o.mask, o.eps_bits, o.t_bits);
    }
  };

  static std::uint64_t bits_of(double x) {
    std::uint64_t b;
    std::memcpy(&b, &x, sizeof(b));
    return b;
  }

  SpacePtr space_;
  KernelSet kernels_;
  mutable std::shared_mutex mutex_;
  mutable std::map<Key, std::shared_ptr<const Mat>> cache_;
};

}  // namespace kinhier
