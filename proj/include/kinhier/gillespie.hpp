#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

#include "kinhier/errors.hpp"
#include "kinhier/kernels.hpp"
#include "kinhier/state_space.hpp"

namespace kinhier {

/// Derived stream seed for replica r; splitmix64 finalizer over the pair so
/// ensembles reproduce independently of scheduling.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t replica) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (replica + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

struct GillespieResult {
  std::vector<double> jump_times;
  std::vector<std::vector<int>> states_after;
  std::vector<int> final_state;
};

namespace detail {

// Destination draw: v with probability w(v) A(v; ...) given its cumulative
// scan sums to one (validated kernels).
template <typename Density>
int sample_destination(const EntitySpace& space, Density&& density,
                       std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  const int K = space.flat_count();
  for (int v = 0; v < K; ++v) {
    acc += space.weight(v) * density(v);
    if (u < acc) return v;
  }
  return K - 1;  // guards rounding at the top of the scan
}

}  // namespace detail

/// Exact-in-law trajectory of the n-entity jump process: entity i jumps at
/// rate a1(u_i) with density A1(.; u_i), and per ordered pair (i, j), i != j,
/// at rate eps a2(u_i, u_j) with density A2(.; u_i, u_j).
inline GillespieResult gillespie_sample(const KernelSet& k,
                                        const EntitySpace& space, int n,
                                        double epsilon, double t_end,
                                        std::uint64_t seed,
                                        std::vector<int> initial) {
  if (static_cast<int>(initial.size()) != n)
    throw cap_error("initial state has the wrong entity count");
  if (epsilon < 0.0) throw cap_error("negative epsilon has no stochastic law");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GillespieResult out;
  out.final_state = std::move(initial);
  auto& u = out.final_state;
  std::vector<double> channel(static_cast<size_t>(n) * (1 + (n - 1)));
  double t = 0.0;
  for (;;) {
    // channels: n one-body, then the n(n-1) ordered pairs in (i, j) order
    size_t c = 0;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      channel[c] = k.a1(u[static_cast<size_t>(i)]);
      total += channel[c++];
    }
    if (epsilon > 0.0)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          channel[c] = epsilon * k.a2(u[static_cast<size_t>(i)],
                                      u[static_cast<size_t>(j)]);
          total += channel[c++];
        }
    else
      c = static_cast<size_t>(n);
    if (!(total > 0.0)) break;
    t += -std::log1p(-unit(rng)) / total;
    if (t > t_end) break;
    // channel pick by cumulative scan
    double pick = unit(rng) * total;
    size_t chosen = 0;
    double acc = 0.0;
    for (size_t idx = 0; idx < c; ++idx) {
      acc += channel[idx];
      if (pick < acc) {
        chosen = idx;
        break;
      }
      if (idx + 1 == c) chosen = idx;
    }
    int mover, dest;
    if (chosen < static_cast<size_t>(n)) {
      mover = static_cast<int>(chosen);
      dest = detail::sample_destination(
          space, [&](int v) { return k.A1(v, u[static_cast<size_t>(mover)]); },
          rng);
    } else {
      const size_t pair_idx = chosen - static_cast<size_t>(n);
      const int i = static_cast<int>(pair_idx) / (n - 1);
      int j = static_cast<int>(pair_idx) % (n - 1);
      if (j >= i) ++j;
      mover = i;
      const int partner = u[static_cast<size_t>(j)];
      dest = detail::sample_destination(
          space,
          [&](int v) { return k.A2(v, u[static_cast<size_t>(mover)], partner); },
          rng);
    }
    u[static_cast<size_t>(mover)] = dest;
    out.jump_times.push_back(t);
    out.states_after.push_back(u);
  }
  return out;
}

/// Draws one entity state from the order-1 density f1: P(u) = w(u) f1(u).
inline int sample_entity(const EntitySpace& space, const TensorFunction& f1,
                         std::mt19937_64& rng) {
  if (f1.order() != 1 || f1.kind() != Kind::state)
    throw cap_error("initial draw needs an order-1 state density");
  return detail::sample_destination(
      space, [&](int v) { return f1.values()[v]; }, rng);
}

/// Final states of `replicas` independent trajectories from i.i.d. product
/// initial data; replica r runs on stream mix_seed(master, r), so the result
/// does not depend on the thread count.
inline std::vector<std::vector<int>> gillespie_ensemble(
    const KernelSet& k, const EntitySpace& space, int n, double epsilon,
    double t_end, const TensorFunction& f1_initial, int replicas,
    std::uint64_t master_seed, int threads = 0) {
  if (replicas < 1) throw cap_error("ensemble needs at least one replica");
  std::vector<std::vector<int>> finals(static_cast<size_t>(replicas));
  if (threads <= 0)
    threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<int>(threads, replicas);
  auto worker = [&](int first, int past) {
    for (int r = first; r < past; ++r) {
      std::mt19937_64 rng(mix_seed(master_seed, static_cast<std::uint64_t>(r)));
      std::vector<int> init(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) init[static_cast<size_t>(i)] =
          sample_entity(space, f1_initial, rng);
      // trajectory stream separated from the initial draw stream
      finals[static_cast<size_t>(r)] =
          gillespie_sample(k, space, n, epsilon, t_end, rng(), std::move(init))
              .final_state;
    }
  };
  if (threads == 1) {
    worker(0, replicas);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (replicas + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int first = t * chunk;
      const int past = std::min(replicas, first + chunk);
      if (first >= past) break;
      pool.emplace_back(worker, first, past);
    }
    for (auto& th : pool) th.join();
  }
  return finals;
}

/// Weighted histogram over the selected entity slots, normalized so that the
/// weighted total mass is one, then symmetrized.
inline TensorFunction empirical_marginal(const SpacePtr& space,
                                         const std::vector<std::vector<int>>& ensemble,
                                         const std::vector<int>& entities) {
  if (ensemble.empty()) throw numeric_error("empty ensemble");
  const int m = static_cast<int>(entities.size());
  TensorFunction est(space, m, Kind::state);
  const int K = space->flat_count();
  std::array<int, TensorFunction::kOrderCap> digits{};
  for (const auto& state : ensemble) {
    for (int i = 0; i < m; ++i) {
      const int e = entities[static_cast<size_t>(i)];
      if (e < 0 || e >= static_cast<int>(state.size()))
        throw cap_error("entity index outside the simulated system");
      digits[static_cast<size_t>(i)] = state[static_cast<size_t>(e)];
    }
    est.values()[encode_multi(digits.data(), m, K)] += 1.0;
  }
  const Vec w = multi_weight(*space, m);
  const double r = static_cast<double>(ensemble.size());
  for (Eigen::Index i = 0; i < est.values().size(); ++i)
    est.values()[i] /= r * w[i];
  return symmetrize(est);
}

/// Total-variation distance between two probability mass vectors together
/// with the Monte Carlo null band: under H0 the empirical TV concentrates at
/// mean0 with spread sd0, both from the exact masses and the replica count.
struct TvBand {
  double tv = 0.0;
  double mean0 = 0.0;
  double sd0 = 0.0;

  bool pass() const { return tv <= mean0 + 3.0 * sd0; }
};

inline TvBand tv_against_exact(const Vec& empirical_mass, const Vec& exact_mass,
                               int replicas) {
  if (empirical_mass.size() != exact_mass.size())
    throw numeric_error("mass vectors of different length");
  TvBand band;
  double var_sum = 0.0;
  for (Eigen::Index u = 0; u < exact_mass.size(); ++u) {
    band.tv += 0.5 * std::abs(empirical_mass[u] - exact_mass[u]);
    const double p = std::clamp(exact_mass[u], 0.0, 1.0);
    const double sigma2 = p * (1.0 - p) / static_cast<double>(replicas);
    band.mean0 += 0.5 * std::sqrt(2.0 / M_PI) * std::sqrt(sigma2);
    var_sum += sigma2;
  }
  band.sd0 = 0.5 * std::sqrt((1.0 - 2.0 / M_PI) * var_sum);
  return band;
}

/// Probability masses P(u tuple) = w tuple times the density values; the
/// bridge between TensorFunction state densities and the TV band.
inline Vec mass_vector(const TensorFunction& f) {
  return multi_weight(*f.space(), f.order()).cwiseProduct(f.values());
}

}  // namespace kinhier
