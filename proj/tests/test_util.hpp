#pragma once

#include <random>

#include "kinhier/state_space.hpp"

namespace testutil {

inline std::mt19937_64 rng(std::uint64_t seed = 20260822ull) {
  return std::mt19937_64(seed);
}

inline kinhier::TensorFunction random_tensor(kinhier::SpacePtr space, int order,
                                             kinhier::Kind kind,
                                             std::mt19937_64& gen,
                                             double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  kinhier::TensorFunction fn(space, order, kind);
  for (Eigen::Index i = 0; i < fn.values().size(); ++i)
    fn.values()[i] = dist(gen);
  return fn;
}

inline kinhier::SequenceVector random_sequence(kinhier::SpacePtr space,
                                               kinhier::Kind kind, int s_max,
                                               std::mt19937_64& gen,
                                               double lo = -1.0,
                                               double hi = 1.0) {
  kinhier::SequenceVector seq(space, kind, s_max);
  for (int n = 0; n <= s_max; ++n)
    seq.component(n) = random_tensor(space, n, kind, gen, lo, hi);
  return seq;
}

inline kinhier::SequenceVector random_symmetric_sequence(
    kinhier::SpacePtr space, kinhier::Kind kind, int s_max,
    std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  kinhier::SequenceVector seq(space, kind, s_max);
  for (int n = 0; n <= s_max; ++n)
    seq.component(n) =
        kinhier::symmetrize(random_tensor(space, n, kind, gen, lo, hi));
  return seq;
}

}  // namespace testutil
