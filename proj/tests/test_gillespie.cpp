#include <cmath>
#include <set>

#include "doctest.h"
#include "kinhier/dynamics.hpp"
#include "kinhier/gillespie.hpp"
#include "test_util.hpp"

using namespace kinhier;

namespace {

KernelSet standard_pair_kernels() {
  Vec a1(2);
  a1 << 0.6, 0.4;
  Mat A1(2, 2);
  A1 << 0.7, 0.4, 0.3, 0.6;  // columns w-normalized, unit weights
  Mat a2 = Mat::Constant(2, 2, 0.5);
  std::vector<Mat> A2(2);
  for (int u2 = 0; u2 < 2; ++u2) {
    Mat t(2, 2);
    for (int u1 = 0; u1 < 2; ++u1)
      for (int v = 0; v < 2; ++v) t(v, u1) = (v == u2) ? 0.8 : 0.2;
    A2[static_cast<size_t>(u2)] = t;
  }
  return KernelSet(std::move(a1), std::move(A1), std::move(a2), std::move(A2),
                   "standard-pair");
}

}  // namespace

TEST_CASE("zero rates produce no jumps") {
  auto space = make_space(2, 1);
  Vec a1 = Vec::Zero(2);
  Mat A1 = Mat::Constant(2, 2, 0.5);
  Mat a2 = Mat::Zero(2, 2);
  std::vector<Mat> A2(2, Mat::Constant(2, 2, 0.5));
  KernelSet k(a1, A1, a2, A2);
  auto r = gillespie_sample(k, *space, 3, 1.0, 10.0, 42, {0, 1, 0});
  CHECK(r.jump_times.empty());
  CHECK(r.final_state == std::vector<int>{0, 1, 0});
}

TEST_CASE("trajectories are reproducible from the seed") {
  auto space = make_space(2, 1);
  auto k = standard_pair_kernels();
  auto a = gillespie_sample(k, *space, 2, 0.5, 2.0, 1234, {0, 1});
  auto b = gillespie_sample(k, *space, 2, 0.5, 2.0, 1234, {0, 1});
  CHECK(a.jump_times == b.jump_times);
  CHECK(a.final_state == b.final_state);
  auto c = gillespie_sample(k, *space, 2, 0.5, 2.0, 1235, {0, 1});
  CHECK(a.jump_times != c.jump_times);
}

TEST_CASE("first holding time is exponential with mean 1/(n a1)") {
  auto space = make_space(2, 1);
  const double lambda = 0.7;
  Vec a1 = Vec::Constant(2, lambda);
  Mat A1 = Mat::Constant(2, 2, 0.5);
  Mat a2 = Mat::Zero(2, 2);
  std::vector<Mat> A2(2, Mat::Constant(2, 2, 0.5));
  KernelSet k(a1, A1, a2, A2);
  const int n = 2;
  const int R = 100000;
  const double mean = 1.0 / (n * lambda);
  double sum = 0.0;
  for (int r = 0; r < R; ++r) {
    auto traj = gillespie_sample(k, *space, n, 0.0, 50.0 * mean,
                                 mix_seed(777, static_cast<std::uint64_t>(r)),
                                 {0, 1});
    REQUIRE(!traj.jump_times.empty());
    sum += traj.jump_times.front();
  }
  const double got = sum / R;
  const double se = mean / std::sqrt(static_cast<double>(R));
  CHECK(std::abs(got - mean) <= 3.0 * se);
}

TEST_CASE("ensemble marginal matches the exact semigroup within the TV band") {
  auto space = make_space(2, 1);
  auto k = standard_pair_kernels();
  const double eps = 0.5;
  const double t = 1.0;
  const int R = 100000;

  TensorFunction f1(space, 1, Kind::state);
  f1.values() << 0.7, 0.3;

  JumpDynamics dyn(space, k);
  auto f0 = tensor_product(f1, f1);
  TensorFunction ft(space, 2, Kind::state,
                    dyn.apply_evolution(2, t, eps, Side::state, f0.values()));
  auto exact = marginal_by_integration(ft, 1);

  auto finals = gillespie_ensemble(k, *space, 2, eps, t, f1, R, 20260822);
  for (int entity : {0, 1}) {
    auto est = empirical_marginal(space, finals, {entity});
    auto band = tv_against_exact(mass_vector(est), mass_vector(exact), R);
    CHECK_MESSAGE(band.pass(), "entity ", entity, " tv=", band.tv,
                  " mean0=", band.mean0, " sd0=", band.sd0);
  }

  // pair marginal against the full two-entity law
  auto est2 = empirical_marginal(space, finals, {0, 1});
  auto band2 = tv_against_exact(mass_vector(est2),
                                mass_vector(symmetrize(ft)), R);
  CHECK_MESSAGE(band2.pass(), "pair tv=", band2.tv, " mean0=", band2.mean0,
                " sd0=", band2.sd0);
}

TEST_CASE("ensembles are independent of the thread count") {
  auto space = make_space(2, 1);
  auto k = standard_pair_kernels();
  TensorFunction f1(space, 1, Kind::state);
  f1.values() << 0.5, 0.5;
  auto serial = gillespie_ensemble(k, *space, 2, 0.5, 1.0, f1, 500, 99, 1);
  auto parallel = gillespie_ensemble(k, *space, 2, 0.5, 1.0, f1, 500, 99, 4);
  CHECK(serial == parallel);
}

TEST_CASE("empirical marginal normalization and base cases") {
  auto space = make_space(2, 2);  // weights 1/2
  std::vector<std::vector<int>> one = {{3, 1}};
  auto ind = empirical_marginal(space, one, {0});
  CHECK(ind.values()[3] == doctest::Approx(2.0));  // 1 / w
  CHECK(mass_vector(ind).sum() == doctest::Approx(1.0));

  // zero rates from a uniform initial: estimate stays uniform in TV
  Vec a1 = Vec::Zero(4);
  Mat A1 = Mat::Constant(4, 4, 0.5);
  Mat a2 = Mat::Zero(4, 4);
  std::vector<Mat> A2(4, Mat::Constant(4, 4, 0.5));
  KernelSet k(a1, A1, a2, A2);
  TensorFunction uniform(space, 1, Kind::state,
                         Vec::Constant(4, 1.0 / space->total_weight()));
  const int R = 50000;
  auto finals = gillespie_ensemble(k, *space, 1, 0.0, 1.0, uniform, R, 5);
  auto est = empirical_marginal(space, finals, {0});
  CHECK(mass_vector(est).sum() == doctest::Approx(1.0).epsilon(1e-12));
  auto band = tv_against_exact(mass_vector(est), mass_vector(uniform), R);
  CHECK_MESSAGE(band.pass(), "tv=", band.tv, " mean0=", band.mean0);

  CHECK_THROWS_AS(empirical_marginal(space, {}, {0}), numeric_error);
}

TEST_CASE("derived seeds do not collide over a large ensemble") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t r = 0; r < 10000; ++r) seen.insert(mix_seed(1, r));
  CHECK(seen.size() == 10000);
}
