#include <cmath>

#include "doctest.h"
#include "kinhier/cluster_transforms.hpp"
#include "test_util.hpp"

using namespace kinhier;

namespace {

// direct partition sum for s = 3, written out block by block
double f3_oracle(const SequenceVector& g, int u1, int u2, int u3) {
  const int K = g.space()->flat_count();
  auto g1 = [&](int a) { return g.component(1).values()[a]; };
  auto g2 = [&](int a, int b) { return g.component(2).values()[a * K + b]; };
  auto g3 = [&](int a, int b, int c) {
    return g.component(3).values()[(a * K + b) * K + c];
  };
  return g3(u1, u2, u3) + g1(u1) * g2(u2, u3) + g1(u2) * g2(u1, u3) +
         g1(u3) * g2(u1, u2) + g1(u1) * g1(u2) * g1(u3);
}

}  // namespace

TEST_CASE("cluster expansion with vanishing correlations is a product state") {
  auto space = make_space(2, 1);
  auto g = SequenceVector::state(space, 3);
  g.component(1).values() << 0.6, 0.4;
  auto f = cluster_expand(g);
  const auto& f1 = g.component(1).values();
  for (int u1 = 0; u1 < 2; ++u1)
    for (int u2 = 0; u2 < 2; ++u2) {
      CHECK(f.component(2).values()[u1 * 2 + u2] ==
            doctest::Approx(f1[u1] * f1[u2]));
      for (int u3 = 0; u3 < 2; ++u3)
        CHECK(f.component(3).values()[(u1 * 2 + u2) * 2 + u3] ==
              doctest::Approx(f1[u1] * f1[u2] * f1[u3]));
    }
}

TEST_CASE("cluster expansion matches the explicit partition sum at order 3") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(41);
  auto g = testutil::random_symmetric_sequence(space, Kind::state, 3, gen);
  g.component(0).values()[0] = 1.0;
  auto f = cluster_expand(g);
  for (int u1 = 0; u1 < 2; ++u1)
    for (int u2 = 0; u2 < 2; ++u2) {
      CHECK(f.component(2).values()[u1 * 2 + u2] ==
            doctest::Approx(g.component(2).values()[u1 * 2 + u2] +
                            g.component(1).values()[u1] *
                                g.component(1).values()[u2]));
      for (int u3 = 0; u3 < 2; ++u3)
        CHECK(f.component(3).values()[(u1 * 2 + u2) * 2 + u3] ==
              doctest::Approx(f3_oracle(g, u1, u2, u3)).epsilon(1e-13));
    }
}

TEST_CASE("inverting a product state yields zero correlations") {
  auto space = make_space(2, 1);
  TensorFunction f1(space, 1, Kind::state);
  f1.values() << 0.7, 0.3;
  auto f = SequenceVector::state(space, 3);
  f.component(1) = f1;
  f.component(2) = tensor_product(f1, f1);
  f.component(3) = tensor_product(tensor_product(f1, f1), f1);
  auto g = cluster_invert(f);
  CHECK((g.component(1).values() - f1.values()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.component(2).values().cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(g.component(3).values().cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("expand and invert are mutually inverse") {
  for (int grid : {1, 3}) {
    auto space = make_space(1, grid);
    auto gen = testutil::rng(43 + grid);
    auto g = testutil::random_symmetric_sequence(space, Kind::state, 4, gen);
    g.component(0).values()[0] = 1.0;
    auto f = cluster_expand(g);
    auto g2 = cluster_invert(f);
    auto f2 = cluster_expand(g2);
    for (int n = 1; n <= 4; ++n) {
      CHECK((g2.component(n).values() - g.component(n).values())
                .cwiseAbs()
                .maxCoeff() <= 1e-12);
      CHECK((f2.component(n).values() - f.component(n).values())
                .cwiseAbs()
                .maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("dressing transforms invert each other") {
  auto space = make_space(2, 1);
  auto gen = testutil::rng(47);
  auto g = testutil::random_symmetric_sequence(space, Kind::state, 3, gen);
  g.component(0).values()[0] = 1.0;
  auto dressed = correlation_dressing_transform(g, DressingDirection::forward);
  auto back = correlation_dressing_transform(dressed, DressingDirection::inverse);
  for (int n = 1; n <= 3; ++n)
    CHECK((back.component(n).values() - g.component(n).values())
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
}

TEST_CASE("dressing keeps order one fixed and expands trivial tails to products") {
  auto space = make_space(2, 1);
  auto g = SequenceVector::state(space, 3);
  g.component(1).values() << 0.55, 0.45;
  auto dressed = correlation_dressing_transform(g, DressingDirection::forward);
  CHECK((dressed.component(1).values() - g.component(1).values())
            .cwiseAbs()
            .maxCoeff() == 0.0);
  auto prod = tensor_product(g.component(1), g.component(1));
  CHECK((dressed.component(2).values() - prod.values()).cwiseAbs().maxCoeff() <=
        1e-14);
  auto undone = correlation_dressing_transform(dressed, DressingDirection::inverse);
  CHECK(undone.component(2).values().cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(undone.component(3).values().cwiseAbs().maxCoeff() <= 1e-14);
}
