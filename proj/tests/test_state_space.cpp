#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "kinhier/state_space.hpp"
#include "kinhier/tensor_io.hpp"
#include "test_util.hpp"

using namespace kinhier;

TEST_CASE("entity space flat index bijection and weights") {
  auto space = make_space(2, 3);
  CHECK(space->flat_count() == 6);
  CHECK(space->total_weight() == doctest::Approx(2.0));
  for (int k = 0; k < space->flat_count(); ++k) {
    CHECK(space->flat_index(space->subpopulation(k), space->grid_index(k)) == k);
    CHECK(space->weight(k) == doctest::Approx(1.0 / 3.0));
  }
  // subpopulation slices share the grid
  CHECK(space->position(0) == doctest::Approx(space->position(3)));
  CHECK_THROWS_AS(make_space(3, 3), cap_error);  // K = 9 over cap
  CHECK_THROWS_AS(EntitySpace(1, {0.5}, {-1.0}), cap_error);
}

TEST_CASE("tensor order cap and symmetric flag checking") {
  auto space = make_space(2, 1);
  CHECK_THROWS_AS(TensorFunction(space, 6, Kind::observable), cap_error);
  Vec v(4);
  v << 1.0, 2.0, 3.0, 4.0;  // v(0,1) != v(1,0)
  CHECK_THROWS_AS(TensorFunction(space, 2, Kind::observable, v, true), cap_error);
  Vec s(4);
  s << 1.0, 2.5, 2.5, 4.0;
  CHECK_NOTHROW(TensorFunction(space, 2, Kind::observable, s, true));
}

TEST_CASE("symmetrize averages permutations and is idempotent") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng();

  // order 1: unchanged
  auto f1 = testutil::random_tensor(space, 1, Kind::observable, gen);
  CHECK((symmetrize(f1).values() - f1.values()).cwiseAbs().maxCoeff() == 0.0);

  // order 2: (v(i,j)+v(j,i))/2
  Vec v(4);
  v << 1.0, 2.0, 4.0, 8.0;
  TensorFunction f2(space, 2, Kind::observable, v);
  auto sym = symmetrize(f2);
  CHECK(sym.values()[1] == doctest::Approx(3.0));
  CHECK(sym.values()[2] == doctest::Approx(3.0));
  CHECK(sym.values()[0] == doctest::Approx(1.0));

  // order 3: invariant under all 6 slot permutations
  auto f3 = symmetrize(testutil::random_tensor(space, 3, Kind::observable, gen));
  CHECK(f3.symmetry_defect() <= 1e-14);
  auto twice = symmetrize(f3);
  CHECK((twice.values() - f3.values()).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("observable norm: frozen examples and norm axioms") {
  auto space = make_space(2, 1);
  SequenceVector b(space, Kind::observable, 3);
  b.component(0).values()[0] = 1.0;
  CHECK(c_gamma_norm(b, 0.3) == doctest::Approx(1.0));

  SequenceVector b2(space, Kind::observable, 3);
  b2.component(2).values().setConstant(2.0);
  CHECK(c_gamma_norm(b2, 0.5) == doctest::Approx(0.25));

  SequenceVector zero(space, Kind::observable, 3);
  CHECK(c_gamma_norm(zero, 0.5) == 0.0);

  auto gen = testutil::rng(7);
  auto x = testutil::random_sequence(space, Kind::observable, 3, gen);
  auto y = testutil::random_sequence(space, Kind::observable, 3, gen);
  SequenceVector sum(space, Kind::observable, 3);
  SequenceVector scaled(space, Kind::observable, 3);
  for (int n = 0; n <= 3; ++n) {
    sum.component(n).values() = x.component(n).values() + y.component(n).values();
    scaled.component(n).values() = -2.5 * x.component(n).values();
  }
  CHECK(c_gamma_norm(sum, 0.4) <=
        c_gamma_norm(x, 0.4) + c_gamma_norm(y, 0.4) + 1e-12);
  CHECK(c_gamma_norm(scaled, 0.4) == doctest::Approx(2.5 * c_gamma_norm(x, 0.4)));
}

TEST_CASE("state norm: frozen example and weighted-sum oracle") {
  auto space = make_space(2, 1);
  auto f = SequenceVector::state(space, 3);
  f.component(1).values() << 0.25, 0.75;  // unit weights, mass 1
  CHECK(l1_alpha_norm(f, 2.0) == doctest::Approx(3.0));

  auto space2 = make_space(1, 2);
  auto gen = testutil::rng(11);
  auto g = testutil::random_sequence(space2, Kind::state, 2, gen);
  double expected = 0.0;
  for (int n = 0; n <= 2; ++n) {
    const Vec w = multi_weight(*space2, n);
    double mass = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      mass += w[i] * std::abs(g.component(n).values()[i]);
    expected += std::pow(2.0, n) * mass;
  }
  CHECK(l1_alpha_norm(g, 2.0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("pairing: frozen examples, brute-force oracle, bilinearity") {
  auto space = make_space(2, 1);

  SequenceVector b(space, Kind::observable, 2);
  b.component(0).values()[0] = 3.5;
  auto f = SequenceVector::state(space, 2);
  CHECK(pair(b, f, true) == doctest::Approx(3.5));

  SequenceVector b1(space, Kind::observable, 2);
  b1.component(1).values() << 2.0, -1.0;
  SequenceVector f1(space, Kind::state, 2);
  f1.component(1).values() << 0.5, 0.25;
  CHECK(pair(b1, f1) == doctest::Approx(2.0 * 0.5 - 1.0 * 0.25));

  auto space3 = make_space(1, 3);
  auto gen = testutil::rng(13);
  auto bb = testutil::random_sequence(space3, Kind::observable, 3, gen);
  auto ff = testutil::random_sequence(space3, Kind::state, 3, gen);
  double oracle = 0.0;
  double fact = 1.0;
  const int K = space3->flat_count();
  for (int n = 0; n <= 3; ++n) {
    if (n > 0) fact *= n;
    std::array<int, TensorFunction::kOrderCap> d{};
    for (std::int64_t idx = 0; idx < ipow(K, n); ++idx) {
      decode_multi(idx, n, K, d.data());
      double w = 1.0;
      for (int i = 0; i < n; ++i) w *= space3->weight(d[static_cast<size_t>(i)]);
      oracle += w * bb.component(n).values()[idx] *
                ff.component(n).values()[idx] / fact;
    }
  }
  CHECK(pair(bb, ff) == doctest::Approx(oracle).epsilon(1e-12));

  auto bb2 = testutil::random_sequence(space3, Kind::observable, 3, gen);
  SequenceVector bsum(space3, Kind::observable, 3);
  for (int n = 0; n <= 3; ++n)
    bsum.component(n).values() =
        bb.component(n).values() + bb2.component(n).values();
  CHECK(pair(bsum, ff) ==
        doctest::Approx(pair(bb, ff) + pair(bb2, ff)).epsilon(1e-12));

  SequenceVector fzero(space3, Kind::state, 2);
  CHECK_THROWS_AS(pair(bb, fzero, true), numeric_error);
}

TEST_CASE("symmetrize preserves the pairing against symmetric states") {
  auto space = make_space(1, 3);
  auto gen = testutil::rng(17);
  auto b = testutil::random_sequence(space, Kind::observable, 3, gen);
  auto f = testutil::random_symmetric_sequence(space, Kind::state, 3, gen);
  SequenceVector bsym(space, Kind::observable, 3);
  for (int n = 0; n <= 3; ++n) bsym.component(n) = symmetrize(b.component(n));
  CHECK(pair(b, f) == doctest::Approx(pair(bsym, f)).epsilon(1e-12));
}

TEST_CASE("lift_operator: identity, commutation, pure-tensor oracle") {
  auto space = make_space(1, 3);
  const int K = space->flat_count();
  auto gen = testutil::rng(19);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);

  CHECK((lift_operator(Mat::Identity(K, K), {1}, 3, *space) -
         Mat::Identity(K * K * K, K * K * K))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  Mat op1(K, K), op2(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      op1(i, j) = dist(gen);
      op2(i, j) = dist(gen);
    }
  Mat l1 = lift_operator(op1, {0}, 2, *space);
  Mat l2 = lift_operator(op2, {1}, 2, *space);
  CHECK((l1 * l2 - l2 * l1).cwiseAbs().maxCoeff() <= 1e-14);

  // lift onto slots (0,2) of a pure tensor leaves slot 1 untouched
  Mat pair_op(K * K, K * K);
  for (int i = 0; i < K * K; ++i)
    for (int j = 0; j < K * K; ++j) pair_op(i, j) = dist(gen);
  Vec a(K), b(K), c(K);
  for (int i = 0; i < K; ++i) {
    a[i] = dist(gen);
    b[i] = dist(gen);
    c[i] = dist(gen);
  }
  Vec abc(K * K * K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      for (int l = 0; l < K; ++l) abc[i * K * K + j * K + l] = a[i] * b[j] * c[l];
  Vec got = lift_operator(pair_op, {0, 2}, 3, *space) * abc;
  for (int u1 = 0; u1 < K; ++u1)
    for (int u2 = 0; u2 < K; ++u2)
      for (int u3 = 0; u3 < K; ++u3) {
        double expect = 0.0;
        for (int v1 = 0; v1 < K; ++v1)
          for (int v3 = 0; v3 < K; ++v3)
            expect += pair_op(u1 * K + u3, v1 * K + v3) * a[v1] * c[v3];
        expect *= b[u2];
        CHECK(got[u1 * K * K + u2 * K + u3] ==
              doctest::Approx(expect).epsilon(1e-12));
      }

  CHECK_THROWS_AS(lift_operator(op1, {0, 0}, 2, *space), cap_error);
  CHECK_THROWS_AS(lift_operator(op1, {3}, 2, *space), cap_error);
}

TEST_CASE("lifted operators compose like their factors") {
  auto space = make_space(1, 2);
  const int K = space->flat_count();
  auto gen = testutil::rng(23);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Mat op1(K, K), op2(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      op1(i, j) = dist(gen);
      op2(i, j) = dist(gen);
    }
  // lifting commutes with composition on the same slot
  Mat lhs = lift_operator(op1 * op2, {1}, 3, *space);
  Mat rhs = lift_operator(op1, {1}, 3, *space) * lift_operator(op2, {1}, 3, *space);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("extend_constant places arguments on the named slots") {
  auto space = make_space(2, 1);
  TensorFunction f(space, 1, Kind::observable);
  f.values() << 5.0, 7.0;
  auto lifted = extend_constant(f, {1}, 3);  // argument lives on slot 1
  const int K = 2;
  for (int u1 = 0; u1 < K; ++u1)
    for (int u2 = 0; u2 < K; ++u2)
      for (int u3 = 0; u3 < K; ++u3)
        CHECK(lifted.values()[u1 * 4 + u2 * 2 + u3] ==
              doctest::Approx(f.values()[u2]));
}

TEST_CASE("marginal integration: identity, product split, order independence") {
  auto space = make_space(1, 2);
  auto gen = testutil::rng(29);

  auto f2 = testutil::random_tensor(space, 2, Kind::state, gen);
  auto same = marginal_by_integration(f2, 2);
  CHECK((same.values() - f2.values()).cwiseAbs().maxCoeff() == 0.0);

  TensorFunction f1(space, 1, Kind::state);
  f1.values() << 0.8, 1.2;  // weights 1/2 each -> mass 1
  auto prod = tensor_product(f1, f1);
  auto back = marginal_by_integration(prod, 1);
  CHECK((back.values() - f1.values()).cwiseAbs().maxCoeff() <= 1e-14);

  auto f3 = testutil::random_tensor(space, 3, Kind::state, gen);
  auto direct = marginal_by_integration(f3, 1);
  auto stepwise = marginal_by_integration(marginal_by_integration(f3, 2), 1);
  CHECK((direct.values() - stepwise.values()).cwiseAbs().maxCoeff() <= 1e-14);

  CHECK_THROWS_AS(marginal_by_integration(f3, 4), cap_error);
}

TEST_CASE("tensor CSV round trip with descriptor") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "kinhier_tensor_io_test";
  fs::create_directories(dir);
  auto space = make_space(2, 2);
  auto gen = testutil::rng(31);
  auto fn = testutil::random_tensor(space, 2, Kind::state, gen);
  export_tensor_csv(fn, dir / "t.csv");
  export_tensor_descriptor(fn, dir / "t.json");
  auto loaded = import_tensor_csv(space, dir / "t.csv", dir / "t.json");
  CHECK(loaded.order() == 2);
  CHECK(loaded.kind() == Kind::state);
  CHECK((loaded.values() - fn.values()).cwiseAbs().maxCoeff() == 0.0);

  auto other_space = make_space(1, 2);
  CHECK_THROWS_AS(import_tensor_csv(other_space, dir / "t.csv", dir / "t.json"),
                  config_error);
  fs::remove_all(dir);
}

TEST_CASE("state sequences pin the order-0 component to one") {
  auto space = make_space(2, 1);
  auto f = SequenceVector::state(space, 2);
  CHECK(f.component(0).values()[0] == 1.0);
  CHECK_THROWS_AS(SequenceVector(space, Kind::state, 6), cap_error);
}
