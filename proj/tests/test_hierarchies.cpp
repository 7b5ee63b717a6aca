#include <cmath>

#include "doctest.h"
#include "kinhier/hierarchies.hpp"
#include "test_util.hpp"

using namespace kinhier;

namespace {

ClusterSpec spec_of(std::vector<int> cluster, std::vector<int> singletons) {
  ClusterSpec s;
  s.cluster = std::move(cluster);
  s.singletons = std::move(singletons);
  return s;
}

double seq_sup_diff(const SequenceVector& a, const SequenceVector& b) {
  double m = 0.0;
  for (int s = 0; s <= a.s_max(); ++s)
    m = std::max(m, (a.component(s).values() - b.component(s).values())
                        .cwiseAbs()
                        .maxCoeff());
  return m;
}

double seq_sup(const SequenceVector& a) {
  double m = 0.0;
  for (int s = 0; s <= a.s_max(); ++s)
    m = std::max(m, a.component(s).values().cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

TEST_CASE("order-1 cumulant is the plain semigroup") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(201);
  JumpDynamics dyn(space, random_kernels(*space, gen));
  const double t = 0.6, eps = 0.4;
  auto cum = cumulant(dyn, t, spec_of({0, 1}, {}), Side::observable, eps);
  const Mat& ev = *dyn.evolution(2, t, eps, Side::observable);
  CHECK((cum.op - ev).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK(cum.order() == 1);
}

TEST_CASE("cumulants at t = 0: identity at order one, zero above") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(203);
  JumpDynamics dyn(space, random_kernels(*space, gen));
  for (int n = 0; n <= 4; ++n) {
    std::vector<int> singles;
    for (int j = 1; j <= n; ++j) singles.push_back(j);
    auto cum = cumulant(dyn, 0.0, spec_of({0}, singles), Side::observable, 0.7);
    const std::int64_t dim = cum.op.rows();
    if (n == 0)
      CHECK((cum.op - Mat::Identity(dim, dim)).cwiseAbs().maxCoeff() <= 1e-13);
    else
      CHECK(cum.op.cwiseAbs().maxCoeff() <= 1e-13);
  }
}

TEST_CASE("without two-body rates every higher cumulant vanishes") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(207);
  JumpDynamics dyn(space, random_kernels(*space, gen).without_two_body());
  for (double t : {0.3, 1.2}) {
    for (Side side : {Side::observable, Side::state}) {
      auto c2 = cumulant(dyn, t, spec_of({0, 1}, {2}), side, 0.9);
      CHECK(c2.op.cwiseAbs().maxCoeff() <= 1e-12);
      auto c3 = cumulant(dyn, t, spec_of({0}, {1, 2}), side, 0.9);
      CHECK(c3.op.cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("cumulant short-time rates track the generator orders") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(211);
  auto k = random_kernels(*space, gen, 1.0, 0.8);
  JumpDynamics dyn(space, k);
  const double eps = 0.6;
  const int K = space->flat_count();
  auto b2 = testutil::random_tensor(space, 2, Kind::observable, gen);
  auto b3 = testutil::random_tensor(space, 3, Kind::observable, gen);

  auto residual_order1 = [&](double t) {
    auto cum = cumulant(dyn, t, spec_of({0, 1, 2}, {}), Side::observable, eps);
    Vec fd = (cum.op * b3.values() - b3.values()) / t;
    Vec exact = dyn.generator(3, eps, Side::observable).matrix * b3.values();
    return (fd - exact).cwiseAbs().maxCoeff();
  };
  CHECK(residual_order1(1e-2) / residual_order1(1e-3) >= 5.0);

  // order 2 against eps sum_i Lambda2(i, j) on a function constant in slot j
  const Mat L2 = two_body_generator(k, *space, Side::observable);
  const Vec ext = extend_constant(b2, {0, 1}, 3).values();
  Vec limit = Vec::Zero(K * K * K);
  for (int i : {0, 1}) limit += eps * (lift_operator(L2, {i, 2}, 3, *space) * ext);
  auto residual_order2 = [&](double t) {
    auto cum = cumulant(dyn, t, spec_of({0, 1}, {2}), Side::observable, eps);
    return ((cum.op * ext) / t - limit).cwiseAbs().maxCoeff();
  };
  CHECK(residual_order2(1e-2) / residual_order2(1e-3) >= 5.0);

  // order >= 3 vanishes to first order outright
  auto scaled_order3 = [&](double t) {
    auto cum = cumulant(dyn, t, spec_of({0}, {1, 2}), Side::observable, eps);
    return (cum.op * b3.values() / t).cwiseAbs().maxCoeff();
  };
  CHECK(scaled_order3(1e-2) / scaled_order3(1e-3) >= 5.0);
}

TEST_CASE("cumulant sup-norm bound n! e^{n+2}") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(213);
  for (int trial = 0; trial < 5; ++trial) {
    JumpDynamics dyn(space, random_kernels(*space, gen, 1.0, 1.0));
    for (double t : {0.3, 1.0}) {
      for (int n = 1; n <= 3; ++n) {
        std::vector<int> singles;
        for (int j = 1; j <= n; ++j) singles.push_back(j);
        auto cum =
            cumulant(dyn, t, spec_of({0}, singles), Side::observable, 1.0);
        auto b = testutil::random_tensor(space, n + 1, Kind::observable, gen);
        const double lhs = (cum.op * b.values()).cwiseAbs().maxCoeff();
        const double bound = static_cast<double>(factorial_u64(n)) *
                             std::exp(n + 2.0) *
                             b.values().cwiseAbs().maxCoeff();
        CHECK(lhs <= bound);
      }
    }
  }
}

TEST_CASE("dual hierarchy: identity at t = 0 and single-component collapse") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(217);
  JumpDynamics dyn(space, random_kernels(*space, gen));
  auto b = testutil::random_sequence(space, Kind::observable, 3, gen);
  auto at0 = dual_bbgky_evolve(dyn, b, 0.0, 0.5);
  CHECK(seq_sup_diff(at0, b) <= 1e-12);

  auto b1 = testutil::random_sequence(space, Kind::observable, 1, gen);
  auto moved = dual_bbgky_evolve(dyn, b1, 0.7, 0.5);
  Vec expect = *dyn.evolution(1, 0.7, 0.5, Side::observable) *
               b1.component(1).values();
  CHECK((moved.component(1).values() - expect).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("dual hierarchy group law when the semigroups factorize") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(219);
  JumpDynamics dyn(space, random_kernels(*space, gen).without_two_body());
  auto b = testutil::random_sequence(space, Kind::observable, 3, gen);
  auto one = dual_bbgky_evolve(dyn, dual_bbgky_evolve(dyn, b, 0.5, 0.3), 0.3, 0.3);
  auto two = dual_bbgky_evolve(dyn, b, 0.8, 0.3);
  CHECK(seq_sup_diff(one, two) <= 1e-10);
}

TEST_CASE("dual hierarchy norm bound in C_gamma") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(223);
  const double gamma = 0.3;
  const double bound = std::exp(2.0) / (1.0 - gamma * std::exp(1.0));
  for (int trial = 0; trial < 10; ++trial) {
    JumpDynamics dyn(space, random_kernels(*space, gen, 1.0, 1.0));
    auto b = testutil::random_sequence(space, Kind::observable, 3, gen);
    for (double t : {0.25, 1.0}) {
      auto moved = dual_bbgky_evolve(dyn, b, t, 1.0);
      CHECK(c_gamma_norm(moved, gamma) <= bound * c_gamma_norm(b, gamma));
    }
  }
}

TEST_CASE("hierarchy on states: trivial cases") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(227);
  JumpDynamics dyn(space, random_kernels(*space, gen));
  auto f = testutil::random_symmetric_sequence(space, Kind::state, 3, gen);
  f.component(0).values()[0] = 1.0;

  auto at0 = bbgky_evolve(dyn, f, 0.0, 0.5);
  CHECK(seq_sup_diff(at0, f) <= 1e-12);

  // top component evolves by the plain adjoint semigroup
  auto moved = bbgky_evolve(dyn, f, 0.9, 0.5);
  Vec top = *dyn.evolution(3, 0.9, 0.5, Side::state) * f.component(3).values();
  CHECK((moved.component(3).values() - top).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("dual group and state group are adjoint under the pairing") {
  auto space = make_space(1, 3);
  auto gen = testutil::rng(229);
  JumpDynamics dyn(space, random_kernels(*space, gen, 1.0, 0.7));
  const double eps = 0.45;
  auto b = testutil::random_sequence(space, Kind::observable, 3, gen);
  auto f = testutil::random_symmetric_sequence(space, Kind::state, 3, gen);
  f.component(0).values()[0] = 1.0;
  for (double t : {0.1, 0.5, 1.0}) {
    const double lhs = pair(dual_bbgky_evolve(dyn, b, t, eps), f);
    const double rhs = pair(b, bbgky_evolve(dyn, f, t, eps));
    const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
    CHECK(std::abs(lhs - rhs) / scale <= 1e-9);
  }
}

TEST_CASE("creation operator base cases and nilpotence") {
  auto space = make_space(2, 1);
  SequenceVector b(space, Kind::observable, 3);
  b.component(0).values()[0] = 2.5;
  auto up = creation_op(b);
  CHECK(up.component(0).values()[0] == 0.0);
  CHECK((up.component(1).values() - Vec::Constant(2, 2.5)).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(up.component(2).values().cwiseAbs().maxCoeff() == 0.0);

  SequenceVector c(space, Kind::observable, 3);
  c.component(1).values() << 1.0, -1.0;
  auto up2 = creation_op(c);
  for (int u1 = 0; u1 < 2; ++u1)
    for (int u2 = 0; u2 < 2; ++u2)
      CHECK(up2.component(2).values()[u1 * 2 + u2] ==
            doctest::Approx(c.component(1).values()[u1] +
                            c.component(1).values()[u2]));

  auto gen = testutil::rng(233);
  auto r = testutil::random_sequence(space, Kind::observable, 3, gen);
  for (int k = 0; k < 4; ++k) r = creation_op(r);
  CHECK(seq_sup(r) == 0.0);
}

TEST_CASE("annihilation operator base cases and adjointness") {
  auto space = make_space(2, 1);
  TensorFunction f1(space, 1, Kind::state);
  f1.values() << 0.7, 0.3;  // unit weights, mass 1
  SequenceVector f(space, Kind::state, 3);
  f.component(1) = f1;
  f.component(2) = tensor_product(f1, f1);
  auto down = annihilation_op(f);
  CHECK((down.component(1).values() - f1.values()).cwiseAbs().maxCoeff() <=
        1e-14);
  CHECK(down.component(3).values().cwiseAbs().maxCoeff() == 0.0);

  auto gen = testutil::rng(239);
  auto b = testutil::random_sequence(space, Kind::observable, 3, gen);
  auto fs = testutil::random_symmetric_sequence(space, Kind::state, 3, gen);
  CHECK(pair(creation_op(b), fs) ==
        doctest::Approx(pair(b, annihilation_op(fs))).epsilon(1e-12));
}

TEST_CASE("generator B: interaction-free form and finite differences") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(241);
  auto k = random_kernels(*space, gen, 1.0, 0.6);
  const double eps = 0.5;

  JumpDynamics free_dyn(space, k.without_two_body());
  auto b = testutil::random_sequence(space, Kind::observable, 3, gen);
  auto Bb = generator_B(free_dyn, b, eps);
  const Mat L1 = one_body_generator(k, *space, Side::observable);
  for (int s = 1; s <= 3; ++s) {
    Vec expect = Vec::Zero(ipow(2, s));
    for (int i = 0; i < s; ++i)
      expect += lift_operator(L1, {i}, s, *space) * b.component(s).values();
    CHECK((Bb.component(s).values() - expect).cwiseAbs().maxCoeff() <= 1e-13);
  }

  JumpDynamics dyn(space, k);
  auto Bfull = generator_B(dyn, b, eps);
  auto residual = [&](double t) {
    auto moved = dual_bbgky_evolve(dyn, b, t, eps);
    double m = 0.0;
    for (int s = 0; s <= 3; ++s)
      m = std::max(
          m, ((moved.component(s).values() - b.component(s).values()) / t -
              Bfull.component(s).values())
                 .cwiseAbs()
                 .maxCoeff());
    return m;
  };
  CHECK(residual(1e-2) / residual(1e-3) >= 5.0);
}

TEST_CASE("generator B equals the creation-conjugated diagonal generator") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(251);
  JumpDynamics dyn(space, random_kernels(*space, gen, 1.0, 0.7));
  const double eps = 0.35;
  auto b = testutil::random_sequence(space, Kind::observable, 3, gen);

  auto conj = exp_creation(
      apply_diag_generator(dyn, exp_creation(b, 1.0), eps), -1.0);
  auto direct = generator_B(dyn, b, eps);
  CHECK(seq_sup_diff(conj, direct) <= 1e-10);

  // the double commutator with the creation operator vanishes
  auto lam = [&](const SequenceVector& x) {
    return apply_diag_generator(dyn, x, eps);
  };
  auto comm = [&](const SequenceVector& x) {
    auto first = lam(creation_op(x));
    detail::seq_axpy(-1.0, creation_op(lam(x)), first);
    return first;  // [Lambda, a+] x
  };
  auto dbl = comm(creation_op(b));
  detail::seq_axpy(-1.0, creation_op(comm(b)), dbl);
  CHECK(seq_sup(dbl) <= 1e-10 * std::max(1.0, seq_sup(b)));
}

TEST_CASE("generator B*: interaction-free form, commutator, finite differences") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(257);
  auto k = random_kernels(*space, gen, 1.0, 0.6);
  const double eps = 0.4;

  JumpDynamics free_dyn(space, k.without_two_body());
  auto f = testutil::random_symmetric_sequence(space, Kind::state, 3, gen);
  f.component(0).values()[0] = 1.0;
  auto Bf = generator_Bstar(free_dyn, f, eps);
  const Mat L1s = one_body_generator(k, *space, Side::state);
  for (int s = 1; s <= 3; ++s) {
    Vec expect = Vec::Zero(ipow(2, s));
    for (int i = 0; i < s; ++i)
      expect += lift_operator(L1s, {i}, s, *space) * f.component(s).values();
    CHECK((Bf.component(s).values() - expect).cwiseAbs().maxCoeff() <= 1e-13);
  }

  JumpDynamics dyn(space, k);
  auto conj = exp_annihilation(
      apply_diag_generator(dyn, exp_annihilation(f, -1.0), eps), 1.0);
  auto direct = generator_Bstar(dyn, f, eps);
  CHECK(seq_sup_diff(conj, direct) <= 1e-10);

  auto lam = [&](const SequenceVector& x) {
    return apply_diag_generator(dyn, x, eps);
  };
  auto comm = [&](const SequenceVector& x) {
    auto first = annihilation_op(lam(x));
    detail::seq_axpy(-1.0, lam(annihilation_op(x)), first);
    return first;  // [a, Lambda*] x
  };
  auto dbl = annihilation_op(comm(f));
  detail::seq_axpy(-1.0, comm(annihilation_op(f)), dbl);
  CHECK(seq_sup(dbl) <= 1e-10 * std::max(1.0, seq_sup(f)));

  auto residual = [&](double t) {
    auto moved = bbgky_evolve(dyn, f, t, eps);
    double m = 0.0;
    for (int s = 0; s <= 3; ++s)
      m = std::max(
          m, ((moved.component(s).values() - f.component(s).values()) / t -
              direct.component(s).values())
                 .cwiseAbs()
                 .maxCoeff());
    return m;
  };
  CHECK(residual(1e-2) / residual(1e-3) >= 5.0);
}
