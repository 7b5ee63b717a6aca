#pragma once

#include <array>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "kinhier/dynamics.hpp"
#include "kinhier/hierarchies.hpp"
#include "kinhier/state_space.hpp"

namespace kinhier {

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre_nodes(
    int q) {
  if (q < 2) throw cap_error("quadrature order must be at least 2");
  std::vector<double> x(static_cast<size_t>(q)), w(static_cast<size_t>(q));
  for (int i = 0; i < q; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (q + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < q; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1);
      }
      pp = q * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[static_cast<size_t>(i)] = z;
    w[static_cast<size_t>(i)] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
  return {x, w};
}

namespace detail {

// Product of one-entity operators E on the active slots, identity elsewhere.
inline Mat one_body_flow(const Mat& E, const std::vector<char>& active,
                         int order, int K) {
  const std::int64_t dim = ipow(K, order);
  Mat out(dim, dim);
  std::array<int, TensorFunction::kOrderCap> dr{}, dc{};
  for (std::int64_t r = 0; r < dim; ++r) {
    decode_multi(r, order, K, dr.data());
    for (std::int64_t c = 0; c < dim; ++c) {
      decode_multi(c, order, K, dc.data());
      double prod = 1.0;
      for (int l = 0; l < order && prod != 0.0; ++l) {
        if (active[static_cast<size_t>(l)])
          prod *= E(dr[static_cast<size_t>(l)], dc[static_cast<size_t>(l)]);
        else if (dr[static_cast<size_t>(l)] != dc[static_cast<size_t>(l)])
          prod = 0.0;
      }
      out(r, c) = prod;
    }
  }
  return out;
}

// Nested time-ordered integral of flow(level) V(level+1) flow(level+1) ...,
// assembled as a dense operator by recursive Gauss-Legendre quadrature.
struct NestedFlowIntegral {
  const Mat* L1exp_base = nullptr;  // one-entity generator (not exponential)
  std::vector<std::vector<char>> active;  // per level, size levels+1
  std::vector<Mat> V;                     // per level, size levels
  int order = 0;
  int K = 0;
  int quad = 8;
  const Mat* L1 = nullptr;

  Mat flow(int level, double tau) const {
    const Mat E = matrix_exponential(tau * (*L1));
    return one_body_flow(E, active[static_cast<size_t>(level)], order, K);
  }

  Mat run(int level, double tau) const {
    if (level == static_cast<int>(V.size())) return flow(level, tau);
    const auto [xs, ws] = gauss_legendre_nodes(quad);
    const std::int64_t dim = ipow(K, order);
    Mat acc = Mat::Zero(dim, dim);
    for (size_t i = 0; i < xs.size(); ++i) {
      const double ti = 0.5 * tau * (xs[i] + 1.0);
      const double wi = 0.5 * tau * ws[i];
      acc += wi * (flow(level, tau - ti) * V[static_cast<size_t>(level)] *
                   run(level + 1, ti));
    }
    return acc;
  }
};

}  // namespace detail

/// The n-fold time-ordered integral operator of the mean-field expansion on
/// K^s, for one ordered tuple of removed (conditioning) slots: flows are
/// one-body products excluding the slots removed so far, and the k-th
/// interaction sum couples any not-yet-removed slot to removed[k].
inline Mat limit_cumulant_integral(const KernelSet& k, const EntitySpace& space,
                                   int s, const std::vector<int>& removed,
                                   double t, int quad_order = 8) {
  const int n = static_cast<int>(removed.size());
  if (n > s - 1) throw cap_error("cannot remove that many slots");
  const int K = space.flat_count();
  if (ipow(K, s) > kDenseDimCap)
    throw cap_error("limit integral dimension exceeds cap");
  {
    std::vector<char> seen(static_cast<size_t>(s), 0);
    for (int j : removed) {
      if (j < 0 || j >= s || seen[static_cast<size_t>(j)])
        throw cap_error("removed slots must be distinct and in range");
      seen[static_cast<size_t>(j)] = 1;
    }
  }
  const Mat L1 = one_body_generator(k, space, Side::observable);
  const Mat L2 = two_body_generator(k, space, Side::observable);

  detail::NestedFlowIntegral nested;
  nested.order = s;
  nested.K = K;
  nested.quad = quad_order;
  nested.L1 = &L1;
  std::vector<char> act(static_cast<size_t>(s), 1);
  nested.active.push_back(act);  // level 0: every slot flows
  for (int lev = 1; lev <= n; ++lev) {
    act[static_cast<size_t>(removed[static_cast<size_t>(lev - 1)])] = 0;
    nested.active.push_back(act);
  }
  for (int lev = 0; lev < n; ++lev) {
    const int j = removed[static_cast<size_t>(lev)];
    Mat V = Mat::Zero(ipow(K, s), ipow(K, s));
    for (int i = 0; i < s; ++i) {
      if (i == j) continue;
      bool excluded = false;
      for (int p = 0; p < lev; ++p)
        if (removed[static_cast<size_t>(p)] == i) excluded = true;
      if (excluded) continue;
      V += lift_operator(L2, {i, j}, s, space);
    }
    nested.V.push_back(std::move(V));
  }
  return nested.run(0, t);
}

namespace detail {

template <class F>
inline void for_each_ordered_tuple(int s, int n, F&& fn) {
  std::vector<int> tuple;
  std::vector<char> used(static_cast<size_t>(s), 0);
  auto rec = [&](auto&& self) -> void {
    if (static_cast<int>(tuple.size()) == n) {
      fn(tuple);
      return;
    }
    for (int j = 0; j < s; ++j) {
      if (used[static_cast<size_t>(j)]) continue;
      used[static_cast<size_t>(j)] = 1;
      tuple.push_back(j);
      self(self);
      tuple.pop_back();
      used[static_cast<size_t>(j)] = 0;
    }
  };
  rec(rec);
}

}  // namespace detail

/// Component s of the limit expansion: over every ordered tuple of removed
/// slots (no 1/n!; the integrand depends on the removal order), the nested
/// integral applied to b_{s-n} extended constant in the removed slots.
inline Vec limit_expansion_component(const KernelSet& k, const EntitySpace& space,
                                     const SequenceVector& b0, int s, double t,
                                     int quad_order = 8) {
  const int K = space.flat_count();
  Vec acc = Vec::Zero(ipow(K, s));
  for (int n = 0; n <= s - 1; ++n) {
    detail::for_each_ordered_tuple(s, n, [&](const std::vector<int>& removed) {
      std::vector<int> kept;
      for (int j = 0; j < s; ++j) {
        bool rm = false;
        for (int r : removed)
          if (r == j) rm = true;
        if (!rm) kept.push_back(j);
      }
      const Mat T = limit_cumulant_integral(k, space, s, removed, t, quad_order);
      acc += T * extend_constant(b0.component(s - n), kept, s).values();
    });
  }
  return acc;
}

namespace detail {

// Component s of the finite expansion with cumulants rescaled by epsilon^-n.
inline Vec finite_expansion_component(const JumpDynamics& dyn,
                                      const SequenceVector& b0, int s, double t,
                                      double epsilon) {
  const int K = dyn.space().flat_count();
  Vec finite = Vec::Zero(ipow(K, s));
  for (unsigned mask = 0; mask + 1 < (1u << s); ++mask) {
    std::vector<int> X, complement;
    for (int j = 0; j < s; ++j)
      if (mask & (1u << j))
        X.push_back(j);
      else
        complement.push_back(j);
    ClusterSpec spec;
    spec.cluster = complement;
    spec.singletons = X;
    auto cum = cumulant(dyn, t, spec, Side::observable, epsilon);
    const double scale = std::pow(epsilon, -static_cast<double>(X.size()));
    finite += scale * (cum.op *
                       extend_constant(b0.component(s - static_cast<int>(X.size())),
                                       complement, s)
                           .values());
  }
  return finite;
}

}  // namespace detail

/// Sup distance at component s between the epsilon-scaled finite cumulant
/// expansion and the mean-field limit expansion, both applied to b0.
inline double scaled_expansion_error(const JumpDynamics& dyn,
                                     const SequenceVector& b0, double t,
                                     double epsilon, int s,
                                     int quad_order = 8) {
  const Vec finite = detail::finite_expansion_component(dyn, b0, s, t, epsilon);
  const Vec limit =
      limit_expansion_component(dyn.kernels(), dyn.space(), b0, s, t, quad_order);
  return (finite - limit).cwiseAbs().maxCoeff();
}

/// Least-squares slope of log(y) against log(x).
inline double fit_loglog_slope(const std::vector<double>& x,
                               const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw cap_error("slope fit needs matching samples");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0)
      throw numeric_error("slope fit needs positive samples");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y[i]) - my);
  }
  if (sxx == 0.0) throw numeric_error("slope fit needs distinct abscissae");
  return sxy / sxx;
}

struct EpsilonScanResult {
  std::vector<double> epsilons;
  std::vector<double> errors;
  double slope = 0.0;
};

/// Error of the scaled expansion across a range of epsilons; the limit side
/// is epsilon-free and computed once.
inline EpsilonScanResult scaled_expansion_scan(const JumpDynamics& dyn,
                                               const SequenceVector& b0,
                                               double t, int s,
                                               const std::vector<double>& eps,
                                               int quad_order = 8) {
  const Vec limit =
      limit_expansion_component(dyn.kernels(), dyn.space(), b0, s, t, quad_order);
  EpsilonScanResult out;
  out.epsilons = eps;
  for (double e : eps) {
    const Vec finite = detail::finite_expansion_component(dyn, b0, s, t, e);
    out.errors.push_back((finite - limit).cwiseAbs().maxCoeff());
  }
  out.slope = fit_loglog_slope(out.epsilons, out.errors);
  return out;
}

/// Sup distance between the full interacting semigroup and the free product
/// of one-body semigroups applied to b.
inline double kato_one_body_error(const JumpDynamics& dyn,
                                  const TensorFunction& b, double t,
                                  double epsilon) {
  const int s = b.order();
  const int K = dyn.space().flat_count();
  const Vec full = dyn.apply_evolution(s, t, epsilon, Side::observable, b.values());
  const Mat E1 =
      matrix_exponential(t * one_body_generator(dyn.kernels(), dyn.space(),
                                                Side::observable));
  const Vec free =
      detail::one_body_flow(E1, std::vector<char>(static_cast<size_t>(s), 1), s,
                            K) *
      b.values();
  return (full - free).cwiseAbs().maxCoeff();
}

/// Distance between the interacting semigroup and the free one-body product
/// across a range of epsilons.
inline EpsilonScanResult kato_scan(const JumpDynamics& dyn,
                                   const TensorFunction& b, double t,
                                   const std::vector<double>& eps) {
  EpsilonScanResult out;
  out.epsilons = eps;
  for (double e : eps)
    out.errors.push_back(kato_one_body_error(dyn, b, t, e));
  out.slope = fit_loglog_slope(out.epsilons, out.errors);
  return out;
}

/// Fixed-step fourth-order Runge-Kutta with step doubling until two successive
/// refinements differ by less than tol in the sup norm.
template <class Deriv>
inline Vec rk4_refined(const Vec& y0, double t, Deriv&& f, double tol = 1e-8,
                       int initial_steps = 8) {
  auto run = [&](int steps) {
    Vec y = y0;
    const double h = t / steps;
    for (int i = 0; i < steps; ++i) {
      const double ti = i * h;
      const Vec k1 = f(ti, y);
      const Vec k2 = f(ti + 0.5 * h, Vec(y + 0.5 * h * k1));
      const Vec k3 = f(ti + 0.5 * h, Vec(y + 0.5 * h * k2));
      const Vec k4 = f(ti + h, Vec(y + h * k3));
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return y;
  };
  if (t == 0.0) return y0;
  int steps = initial_steps;
  Vec prev = run(steps);
  for (int it = 0; it < 14; ++it) {
    steps *= 2;
    Vec next = run(steps);
    if ((next - prev).cwiseAbs().maxCoeff() < tol) return next;
    prev = std::move(next);
  }
  throw numeric_error("rk4_refined: step halving did not settle");
}

namespace detail {

// Offsets for stacking sequence components 0..s_max into one flat vector.
inline std::vector<std::int64_t> stack_offsets(int K, int s_max) {
  std::vector<std::int64_t> off(static_cast<size_t>(s_max) + 2, 0);
  for (int s = 0; s <= s_max; ++s)
    off[static_cast<size_t>(s) + 1] = off[static_cast<size_t>(s)] + ipow(K, s);
  return off;
}

inline Vec stack_sequence(const SequenceVector& x) {
  const int K = x.space()->flat_count();
  auto off = stack_offsets(K, x.s_max());
  Vec y(off.back());
  for (int s = 0; s <= x.s_max(); ++s)
    y.segment(off[static_cast<size_t>(s)], ipow(K, s)) = x.component(s).values();
  return y;
}

inline SequenceVector unstack_sequence(const Vec& y, const SpacePtr& space,
                                       Kind kind, int s_max) {
  const int K = space->flat_count();
  auto off = stack_offsets(K, s_max);
  SequenceVector x(space, kind, s_max);
  for (int s = 0; s <= s_max; ++s)
    x.component(s).values() = y.segment(off[static_cast<size_t>(s)], ipow(K, s));
  return x;
}

}  // namespace detail

/// Solves the dual Vlasov hierarchy: one-body flow on each component plus the
/// interaction coupling to the component one order below, with the omitted
/// argument placed on the conditioning slot.
inline SequenceVector dual_vlasov_evolve(const KernelSet& k, const SpacePtr& space,
                                         const SequenceVector& b0, double t,
                                         double tol = 1e-8) {
  if (b0.kind() != Kind::observable)
    throw cap_error("dual Vlasov hierarchy expects an observable sequence");
  const int K = space->flat_count();
  const int s_max = b0.s_max();
  const Mat L1 = one_body_generator(k, *space, Side::observable);
  const Mat L2 = two_body_generator(k, *space, Side::observable);
  std::vector<Mat> H(static_cast<size_t>(s_max) + 1);
  std::vector<Mat> C(static_cast<size_t>(s_max) + 1);  // K^s x K^{s-1}
  for (int s = 1; s <= s_max; ++s) {
    const std::int64_t dim = ipow(K, s);
    Mat Hs = Mat::Zero(dim, dim);
    for (int j = 0; j < s; ++j) Hs += lift_operator(L1, {j}, s, *space);
    H[static_cast<size_t>(s)] = std::move(Hs);
    if (s >= 2) {
      const std::int64_t dlow = ipow(K, s - 1);
      Mat Cs = Mat::Zero(dim, dlow);
      for (int j2 = 0; j2 < s; ++j2) {
        // extension of the lower component: argument i of b_{s-1} sits on
        // slot i skipping j2; realized as a dense injection matrix
        Mat ext = Mat::Zero(dim, dlow);
        std::array<int, TensorFunction::kOrderCap> d{}, sub{};
        for (std::int64_t f = 0; f < dim; ++f) {
          decode_multi(f, s, K, d.data());
          int p = 0;
          for (int i = 0; i < s; ++i)
            if (i != j2) sub[static_cast<size_t>(p++)] = d[static_cast<size_t>(i)];
          ext(f, encode_multi(sub.data(), s - 1, K)) = 1.0;
        }
        Mat pairsum = Mat::Zero(dim, dim);
        for (int j1 = 0; j1 < s; ++j1)
          if (j1 != j2) pairsum += lift_operator(L2, {j1, j2}, s, *space);
        Cs += pairsum * ext;
      }
      C[static_cast<size_t>(s)] = std::move(Cs);
    }
  }
  auto off = detail::stack_offsets(K, s_max);
  auto deriv = [&](double, const Vec& y) {
    Vec dy = Vec::Zero(y.size());
    for (int s = 1; s <= s_max; ++s) {
      auto seg = y.segment(off[static_cast<size_t>(s)], ipow(K, s));
      Vec d = H[static_cast<size_t>(s)] * seg;
      if (s >= 2)
        d += C[static_cast<size_t>(s)] *
             y.segment(off[static_cast<size_t>(s - 1)], ipow(K, s - 1));
      dy.segment(off[static_cast<size_t>(s)], ipow(K, s)) = d;
    }
    return dy;
  };
  Vec yt = rk4_refined(detail::stack_sequence(b0), t, deriv, tol);
  return detail::unstack_sequence(yt, space, Kind::observable, s_max);
}

/// Initial state data for the kinetic layer: a normalized one-particle
/// density plus bounded symmetric correlation factors with g_1 identically
/// one; components above the supplied orders count as uncorrelated.
struct CorrelatedInitialState {
  TensorFunction f1_0;
  SequenceVector g;

  CorrelatedInitialState(TensorFunction f1, SequenceVector g_in)
      : f1_0(std::move(f1)), g(std::move(g_in)) {
    if (f1_0.order() != 1 || f1_0.kind() != Kind::state)
      throw cap_error("f1_0 must be an order-1 state density");
    if (g.kind() != Kind::state)
      throw cap_error("correlation factors are state-kind tensors");
    if (!(*f1_0.space() == *g.space()))
      throw cap_error("correlation factors live on a different space");
    double mass = 0.0;
    for (int u = 0; u < f1_0.space()->flat_count(); ++u)
      mass += f1_0.space()->weight(u) * f1_0.values()[u];
    if (std::abs(mass - 1.0) > 1e-10)
      throw cap_error("f1_0 must carry unit mass");
    if (g.s_max() >= 1 &&
        (g.component(1).values() - Vec::Ones(f1_0.space()->flat_count()))
                .cwiseAbs()
                .maxCoeff() > 1e-12)
      throw cap_error("g_1 must be identically one");
    for (int s = 2; s <= g.s_max(); ++s)
      if (g.component(s).symmetry_defect() > 1e-10)
        throw cap_error("correlation factors must be symmetric");
  }

  /// g_s, or the all-ones factor above the supplied orders.
  TensorFunction g_component(int s) const {
    if (s <= g.s_max()) return g.component(s);
    return TensorFunction(g.space(), s, Kind::state,
                          Vec::Ones(ipow(g.space()->flat_count(), s)));
  }

  /// The assembled truncated state f_s = g_s prod_i f1_0(u_i).
  SequenceVector assemble(int s_max) const {
    SequenceVector f(g.space(), Kind::state, s_max);
    f.component(0).values()[0] = 1.0;
    const int K = g.space()->flat_count();
    std::array<int, TensorFunction::kOrderCap> d{};
    for (int s = 1; s <= s_max; ++s) {
      const TensorFunction gs = g_component(s);
      Vec vals(ipow(K, s));
      for (std::int64_t f_idx = 0; f_idx < vals.size(); ++f_idx) {
        decode_multi(f_idx, s, K, d.data());
        double prod = gs.values()[f_idx];
        for (int i = 0; i < s; ++i) prod *= f1_0.values()[d[static_cast<size_t>(i)]];
        vals[f_idx] = prod;
      }
      f.component(s).values() = std::move(vals);
    }
    return f;
  }
};

struct F1SeriesResult {
  TensorFunction f1;
  double tail = 0.0;  // sup norm of the last computed term
};

/// Partial sum of the one-particle series: term n propagates the correlated
/// (n+1)-entity block through nested one-body flows and interaction
/// insertions, then integrates out entities 2..n+1.  Activation order follows
/// the series: entity k+2 stays frozen until its interaction enters.
inline F1SeriesResult f1_series(const CorrelatedInitialState& init, double t,
                                const KernelSet& k, int n_max,
                                int quad_order = 8) {
  const SpacePtr space = init.g.space();
  const int K = space->flat_count();
  const Mat L1 = one_body_generator(k, *space, Side::state);
  const Mat L2 = two_body_generator(k, *space, Side::state);

  F1SeriesResult out{TensorFunction(space, 1, Kind::state), 0.0};
  for (int n = 0; n <= n_max; ++n) {
    const int order = n + 1;
    if (ipow(K, order) > kDenseDimCap)
      throw cap_error("series term dimension exceeds cap");
    // initial block g_{1+n} prod f1^0
    Vec x(ipow(K, order));
    const TensorFunction gs = init.g_component(order);
    std::array<int, TensorFunction::kOrderCap> d{};
    for (std::int64_t f_idx = 0; f_idx < x.size(); ++f_idx) {
      decode_multi(f_idx, order, K, d.data());
      double prod = gs.values()[f_idx];
      for (int i = 0; i < order; ++i)
        prod *= init.f1_0.values()[d[static_cast<size_t>(i)]];
      x[f_idx] = prod;
    }

    detail::NestedFlowIntegral nested;
    nested.order = order;
    nested.K = K;
    nested.quad = quad_order;
    nested.L1 = &L1;
    for (int lev = 0; lev <= n; ++lev) {
      std::vector<char> act(static_cast<size_t>(order), 0);
      for (int j = 0; j <= lev; ++j) act[static_cast<size_t>(j)] = 1;
      nested.active.push_back(std::move(act));
    }
    for (int lev = 0; lev < n; ++lev) {
      // interaction lev+1 couples slot lev+1 in as the conditioning partner
      Mat V = Mat::Zero(ipow(K, order), ipow(K, order));
      for (int i = 0; i <= lev; ++i)
        V += lift_operator(L2, {i, lev + 1}, order, *space);
      nested.V.push_back(std::move(V));
    }
    const Vec moved = nested.run(0, t) * x;
    const Vec term =
        marginal_by_integration(TensorFunction(space, order, Kind::state, moved),
                                1)
            .values();
    out.f1.values() += term;
    out.tail = term.cwiseAbs().maxCoeff();
  }
  return out;
}

/// State-side hierarchy with one-body flows and the integrated interaction
/// coupling one order up, closed by zero above the truncation.
inline SequenceVector state_vlasov_hierarchy_evolve(const KernelSet& k,
                                                    const SpacePtr& space,
                                                    const SequenceVector& f0,
                                                    double t,
                                                    double tol = 1e-8) {
  if (f0.kind() != Kind::state)
    throw cap_error("state hierarchy expects a state sequence");
  const int K = space->flat_count();
  const int N = f0.s_max();
  const Mat L1 = one_body_generator(k, *space, Side::state);
  const Mat L2 = two_body_generator(k, *space, Side::state);
  std::vector<Mat> H(static_cast<size_t>(N) + 1);
  std::vector<Mat> D(static_cast<size_t>(N) + 1);  // K^s x K^{s+1}
  for (int s = 1; s <= N; ++s) {
    const std::int64_t dim = ipow(K, s);
    Mat Hs = Mat::Zero(dim, dim);
    for (int j = 0; j < s; ++j) Hs += lift_operator(L1, {j}, s, *space);
    H[static_cast<size_t>(s)] = std::move(Hs);
    if (s < N) {
      const std::int64_t dup = ipow(K, s + 1);
      Mat Ds = Mat::Zero(dim, dup);
      // marginal over the last slot as a dense row-sum map
      Mat integ = Mat::Zero(dim, dup);
      for (std::int64_t f_idx = 0; f_idx < dim; ++f_idx)
        for (int v = 0; v < K; ++v)
          integ(f_idx, f_idx * K + v) = space->weight(v);
      Mat pairsum = Mat::Zero(dup, dup);
      for (int i = 0; i < s; ++i)
        pairsum += lift_operator(L2, {i, s}, s + 1, *space);
      Ds = integ * pairsum;
      D[static_cast<size_t>(s)] = std::move(Ds);
    }
  }
  auto off = detail::stack_offsets(K, N);
  auto deriv = [&](double, const Vec& y) {
    Vec dy = Vec::Zero(y.size());
    for (int s = 1; s <= N; ++s) {
      Vec d = H[static_cast<size_t>(s)] *
              y.segment(off[static_cast<size_t>(s)], ipow(K, s));
      if (s < N)
        d += D[static_cast<size_t>(s)] *
             y.segment(off[static_cast<size_t>(s + 1)], ipow(K, s + 1));
      dy.segment(off[static_cast<size_t>(s)], ipow(K, s)) = d;
    }
    return dy;
  };
  Vec yt = rk4_refined(detail::stack_sequence(f0), t, deriv, tol);
  return detail::unstack_sequence(yt, space, Kind::state, N);
}

enum class DressingReading { literal_forward, inverse_dressed };

inline const char* to_string(DressingReading d) {
  return d == DressingReading::literal_forward ? "literal-forward"
                                               : "inverse-dressed";
}

/// D_k(t): one-body flows out, multiplication by g_k, one-body flows in with
/// the sign of time fixed by the reading (+t literal-forward, -t inverse).
inline Vec apply_dressing(const KernelSet& k, const EntitySpace& space,
                          const TensorFunction& g_k, double t,
                          DressingReading reading, const Vec& x) {
  const int order = g_k.order();
  const int K = space.flat_count();
  const Mat L1 = one_body_generator(k, space, Side::state);
  const double sigma = reading == DressingReading::literal_forward ? 1.0 : -1.0;
  const std::vector<char> all(static_cast<size_t>(order), 1);
  const Mat inner =
      detail::one_body_flow(matrix_exponential(sigma * t * L1), all, order, K);
  const Mat outer =
      detail::one_body_flow(matrix_exponential(t * L1), all, order, K);
  return outer * g_k.values().cwiseProduct(inner * x);
}

struct VlasovTrajectory {
  std::vector<double> times;
  std::vector<Vec> f1_values;
  DressingReading dressing = DressingReading::inverse_dressed;
  double min_value = 0.0;  // most negative f1 entry seen on the grid
};

/// Integrates the kinetic equation with initial correlations: one-body flow
/// plus the integrated pair interaction of the dressed product state.
inline VlasovTrajectory vlasov_solve(const CorrelatedInitialState& init,
                                     const std::vector<double>& t_grid,
                                     const KernelSet& k,
                                     DressingReading reading,
                                     double tol = 1e-8) {
  const SpacePtr space = init.g.space();
  const int K = space->flat_count();
  const Mat L1 = one_body_generator(k, *space, Side::state);
  const Mat L2pair = two_body_generator(k, *space, Side::state);
  const TensorFunction g2 = init.g_component(2);
  const std::vector<char> both(2, 1);

  auto deriv = [&](double time, const Vec& f) {
    Vec f2(K * K);
    for (int u1 = 0; u1 < K; ++u1)
      for (int u2 = 0; u2 < K; ++u2) f2[u1 * K + u2] = f[u1] * f[u2];
    const Vec dressed = apply_dressing(k, *space, g2, time, reading, f2);
    const Vec moved = L2pair * dressed;
    Vec coupling(K);
    for (int u1 = 0; u1 < K; ++u1) {
      double acc = 0.0;
      for (int v = 0; v < K; ++v) acc += space->weight(v) * moved[u1 * K + v];
      coupling[u1] = acc;
    }
    return Vec(L1 * f + coupling);
  };

  VlasovTrajectory out;
  out.dressing = reading;
  Vec f = init.f1_0.values();
  double seen_min = f.minCoeff();
  double current = 0.0;
  for (double target : t_grid) {
    if (target < current)
      throw cap_error("time grid must be nondecreasing");
    if (target > current) {
      const double span = target - current;
      auto shifted = [&](double tau, const Vec& y) {
        return deriv(current + tau, y);
      };
      f = rk4_refined(f, span, shifted, tol);
      current = target;
    }
    out.times.push_back(target);
    out.f1_values.push_back(f);
    seen_min = std::min(seen_min, f.minCoeff());
  }
  out.min_value = seen_min;
  return out;
}

struct DressingAdjudication {
  DressingReading chosen = DressingReading::inverse_dressed;
  double residual_forward = 0.0;
  double residual_inverse = 0.0;
};

/// Interaction-free arbiter: with a2 = 0 the correlated pair state evolves
/// exactly by the product one-body flow; the dressing reading must rebuild
/// that state from the evolved one-particle density.
inline DressingAdjudication adjudicate_dressing(const KernelSet& k,
                                                const SpacePtr& space,
                                                const CorrelatedInitialState& init,
                                                double t) {
  const int K = space->flat_count();
  const Mat L1 = one_body_generator(k, *space, Side::state);
  const Mat E = matrix_exponential(t * L1);
  const TensorFunction g2 = init.g_component(2);

  Vec pair0(K * K);
  for (int u1 = 0; u1 < K; ++u1)
    for (int u2 = 0; u2 < K; ++u2)
      pair0[u1 * K + u2] =
          g2.values()[u1 * K + u2] * init.f1_0.values()[u1] * init.f1_0.values()[u2];
  const std::vector<char> both(2, 1);
  const Vec exact = detail::one_body_flow(E, both, 2, K) * pair0;

  const Vec f1t = E * init.f1_0.values();
  Vec prod(K * K);
  for (int u1 = 0; u1 < K; ++u1)
    for (int u2 = 0; u2 < K; ++u2) prod[u1 * K + u2] = f1t[u1] * f1t[u2];

  DressingAdjudication adj;
  const KernelSet free = k.without_two_body();
  adj.residual_forward =
      (apply_dressing(free, *space, g2, t, DressingReading::literal_forward,
                      prod) -
       exact)
          .cwiseAbs()
          .maxCoeff();
  adj.residual_inverse =
      (apply_dressing(free, *space, g2, t, DressingReading::inverse_dressed,
                      prod) -
       exact)
          .cwiseAbs()
          .maxCoeff();
  adj.chosen = adj.residual_inverse <= adj.residual_forward
                   ? DressingReading::inverse_dressed
                   : DressingReading::literal_forward;
  return adj;
}

struct PropagationCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
};

/// Functional equality between the dual-hierarchy route and the dressed
/// kinetic route for a k-ary observable: lhs pairs the evolved observable
/// sequence with the assembled correlated state, rhs rebuilds it from the
/// one-particle series under the chosen dressing.
inline PropagationCheck correlations_propagation_check(
    int k_order, const TensorFunction& b_k0, const CorrelatedInitialState& init,
    double t, const KernelSet& k, DressingReading reading, int s_max_hierarchy,
    int n_max_series, int quad_order = 8, double ode_tol = 1e-8) {
  const SpacePtr space = init.g.space();
  if (k_order < 1 || k_order > s_max_hierarchy)
    throw cap_error("observable order outside the hierarchy truncation");

  SequenceVector bseq(space, Kind::observable, s_max_hierarchy);
  bseq.component(k_order).values() = b_k0.values();
  const SequenceVector bt = dual_vlasov_evolve(k, space, bseq, t, ode_tol);
  const SequenceVector state = init.assemble(s_max_hierarchy);
  PropagationCheck out;
  out.lhs = pair(bt, state);

  const TensorFunction f1t = f1_series(init, t, k, n_max_series, quad_order).f1;
  Vec prod(ipow(space->flat_count(), k_order));
  {
    const int K = space->flat_count();
    std::array<int, TensorFunction::kOrderCap> d{};
    for (std::int64_t f_idx = 0; f_idx < prod.size(); ++f_idx) {
      decode_multi(f_idx, k_order, K, d.data());
      double p = 1.0;
      for (int i = 0; i < k_order; ++i) p *= f1t.values()[d[static_cast<size_t>(i)]];
      prod[f_idx] = p;
    }
  }
  const Vec dressed =
      apply_dressing(k, *space, init.g_component(k_order), t, reading, prod);
  const Vec w = multi_weight(*space, k_order);
  out.rhs = w.cwiseProduct(b_k0.values()).dot(dressed) /
            static_cast<double>(factorial_u64(k_order));
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

}  // namespace kinhier
