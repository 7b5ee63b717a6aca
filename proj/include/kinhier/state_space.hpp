#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "kinhier/errors.hpp"

namespace kinhier {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Finite state space of one entity: `subpopulations` copies of a shared grid.
/// Flat state k = subpopulation * grid_size + grid_index; the integration
/// weight of k depends only on the grid part.  Default grid is midpoints of
/// [0,1] with uniform weights 1/grid_size, so each subpopulation slice carries
/// unit mass.
class EntitySpace {
 public:
  static constexpr int kStateCap = 8;

  EntitySpace(int subpopulations, int grid_points)
      : EntitySpace(subpopulations, midpoint_grid(grid_points),
                    uniform_weights(grid_points)) {}

  EntitySpace(int subpopulations, std::vector<double> grid,
              std::vector<double> grid_weights)
      : subpopulations_(subpopulations),
        grid_(std::move(grid)),
        grid_weights_(std::move(grid_weights)) {
    if (subpopulations_ < 1) throw cap_error("need at least one subpopulation");
    if (grid_.empty()) throw cap_error("grid must be nonempty");
    if (grid_weights_.size() != grid_.size())
      throw cap_error("grid weight count must match grid size");
    for (double w : grid_weights_)
      if (!(w > 0.0)) throw cap_error("grid weights must be positive");
    if (flat_count() > kStateCap)
      throw cap_error("flat state count " + std::to_string(flat_count()) +
                      " exceeds cap " + std::to_string(kStateCap));
    weights_.resize(flat_count());
    for (int k = 0; k < flat_count(); ++k)
      weights_[k] = grid_weights_[static_cast<size_t>(grid_index(k))];
  }

  int subpopulation_count() const { return subpopulations_; }
  int grid_size() const { return static_cast<int>(grid_.size()); }
  int flat_count() const { return subpopulations_ * grid_size(); }

  int flat_index(int subpopulation, int grid_index) const {
    return subpopulation * grid_size() + grid_index;
  }
  int subpopulation(int k) const { return k / grid_size(); }
  int grid_index(int k) const { return k % grid_size(); }
  double position(int k) const {
    return grid_[static_cast<size_t>(grid_index(k))];
  }
  double weight(int k) const { return weights_[k]; }
  const Vec& weights() const { return weights_; }
  double total_weight() const { return weights_.sum(); }

  bool operator==(const EntitySpace& o) const {
    return subpopulations_ == o.subpopulations_ && grid_ == o.grid_ &&
           grid_weights_ == o.grid_weights_;
  }
  bool operator!=(const EntitySpace& o) const { return !(*this == o); }

 private:
  static std::vector<double> midpoint_grid(int g) {
    if (g < 1) throw cap_error("grid must be nonempty");
    std::vector<double> out(static_cast<size_t>(g));
    for (int i = 0; i < g; ++i) out[static_cast<size_t>(i)] = (i + 0.5) / g;
    return out;
  }
  static std::vector<double> uniform_weights(int g) {
    if (g < 1) throw cap_error("grid must be nonempty");
    return std::vector<double>(static_cast<size_t>(g), 1.0 / g);
  }

  int subpopulations_;
  std::vector<double> grid_;
  std::vector<double> grid_weights_;
  Vec weights_;
};

using SpacePtr = std::shared_ptr<const EntitySpace>;

inline SpacePtr make_space(int subpopulations, int grid_points) {
  return std::make_shared<EntitySpace>(subpopulations, grid_points);
}

inline SpacePtr make_space(int subpopulations, std::vector<double> grid,
                           std::vector<double> grid_weights) {
  return std::make_shared<EntitySpace>(subpopulations, std::move(grid),
                                       std::move(grid_weights));
}

inline std::int64_t ipow(int base, int exp) {
  std::int64_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

// Row-major multi-index packing: slot 0 is the most significant digit.
inline void decode_multi(std::int64_t flat, int order, int K, int* digits) {
  for (int i = order - 1; i >= 0; --i) {
    digits[i] = static_cast<int>(flat % K);
    flat /= K;
  }
}

inline std::int64_t encode_multi(const int* digits, int order, int K) {
  std::int64_t flat = 0;
  for (int i = 0; i < order; ++i) flat = flat * K + digits[i];
  return flat;
}

enum class Kind { observable, state };

inline const char* to_string(Kind k) {
  return k == Kind::observable ? "observable" : "state";
}

/// Dense real function of `order` entity states, stored row-major over flat
/// state indices.  Order 0 is a single scalar.
class TensorFunction {
 public:
  static constexpr int kOrderCap = 5;

  TensorFunction(SpacePtr space, int order, Kind kind)
      : TensorFunction(std::move(space), order, kind, Vec(), false, true) {}

  TensorFunction(SpacePtr space, int order, Kind kind, Vec values,
                 bool flag_symmetric = false)
      : TensorFunction(std::move(space), order, kind, std::move(values),
                       flag_symmetric, false) {}

  const SpacePtr& space() const { return space_; }
  int order() const { return order_; }
  Kind kind() const { return kind_; }
  std::int64_t flat_count() const { return ipow(space_->flat_count(), order_); }
  Vec& values() { return values_; }
  const Vec& values() const { return values_; }
  bool flagged_symmetric() const { return symmetric_; }

  /// Max relative deviation from permutation symmetry.
  double symmetry_defect() const {
    const int K = space_->flat_count();
    const int n = order_;
    if (n <= 1) return 0.0;
    double scale = 1.0 + values_.cwiseAbs().maxCoeff();
    std::array<int, kOrderCap> d{}, p{};
    std::array<int, kOrderCap> perm{};
    std::iota(perm.begin(), perm.begin() + n, 0);
    double defect = 0.0;
    do {
      for (std::int64_t f = 0; f < flat_count(); ++f) {
        decode_multi(f, n, K, d.data());
        for (int i = 0; i < n; ++i) p[i] = d[perm[static_cast<size_t>(i)]];
        std::int64_t g = encode_multi(p.data(), n, K);
        defect = std::max(defect, std::abs(values_[f] - values_[g]));
      }
    } while (std::next_permutation(perm.begin(), perm.begin() + n));
    return defect / scale;
  }

  bool is_symmetric(double tol = 1e-10) const { return symmetry_defect() <= tol; }

 private:
  TensorFunction(SpacePtr space, int order, Kind kind, Vec values,
                 bool flag_symmetric, bool zero_fill)
      : space_(std::move(space)),
        order_(order),
        kind_(kind),
        values_(std::move(values)),
        symmetric_(flag_symmetric) {
    if (!space_) throw cap_error("tensor needs a space");
    if (order_ < 0 || order_ > kOrderCap)
      throw cap_error("tensor order " + std::to_string(order_) +
                      " outside 0.." + std::to_string(kOrderCap));
    if (zero_fill) values_ = Vec::Zero(flat_count());
    if (values_.size() != flat_count())
      throw cap_error("tensor value count mismatch");
    if (symmetric_ && !is_symmetric())
      throw cap_error("tensor flagged symmetric fails the symmetry check");
  }

  SpacePtr space_;
  int order_;
  Kind kind_;
  Vec values_;
  bool symmetric_;
};

/// Product of single-entity weights over a multi-index, as a dense vector
/// over flat multi-indices.
inline Vec multi_weight(const EntitySpace& space, int order) {
  const int K = space.flat_count();
  Vec out = Vec::Ones(ipow(K, order));
  std::array<int, TensorFunction::kOrderCap> d{};
  for (std::int64_t f = 0; f < out.size(); ++f) {
    decode_multi(f, order, K, d.data());
    double w = 1.0;
    for (int i = 0; i < order; ++i) w *= space.weight(d[static_cast<size_t>(i)]);
    out[f] = w;
  }
  return out;
}

inline double sup_norm(const TensorFunction& fn) {
  return fn.values().size() == 0 ? 0.0 : fn.values().cwiseAbs().maxCoeff();
}

/// Weighted absolute mass: sum over multi-indices of |value| times the
/// weight product.
inline double weighted_l1_norm(const TensorFunction& fn) {
  return multi_weight(*fn.space(), fn.order())
      .cwiseProduct(fn.values().cwiseAbs())
      .sum();
}

/// Average over all slot permutations.
inline TensorFunction symmetrize(const TensorFunction& fn) {
  const int n = fn.order();
  const int K = fn.space()->flat_count();
  if (n <= 1)
    return TensorFunction(fn.space(), n, fn.kind(), fn.values(), true);
  Vec acc = Vec::Zero(fn.flat_count());
  std::array<int, TensorFunction::kOrderCap> d{}, p{};
  std::array<int, TensorFunction::kOrderCap> perm{};
  std::iota(perm.begin(), perm.begin() + n, 0);
  int count = 0;
  do {
    for (std::int64_t f = 0; f < fn.flat_count(); ++f) {
      decode_multi(f, n, K, d.data());
      for (int i = 0; i < n; ++i) p[i] = d[perm[static_cast<size_t>(i)]];
      acc[f] += fn.values()[encode_multi(p.data(), n, K)];
    }
    ++count;
  } while (std::next_permutation(perm.begin(), perm.begin() + n));
  acc /= count;
  return TensorFunction(fn.space(), n, fn.kind(), std::move(acc), true);
}

/// Lifts an operator on `slots.size()` entities to an operator on `order`
/// entities acting as identity on the remaining slots.  `op` addresses its
/// own factors in the order the slots are listed.
inline Mat lift_operator(const Mat& op, const std::vector<int>& slots,
                         int order, const EntitySpace& space) {
  const int K = space.flat_count();
  const int m = static_cast<int>(slots.size());
  const std::int64_t dim_m = ipow(K, m);
  const std::int64_t dim_n = ipow(K, order);
  if (op.rows() != dim_m || op.cols() != dim_m)
    throw cap_error("lift_operator: operator dimension mismatch");
  for (int s : slots)
    if (s < 0 || s >= order) throw cap_error("lift_operator: slot out of range");
  {
    std::vector<int> sorted = slots;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw cap_error("lift_operator: repeated slot");
  }
  Mat out = Mat::Zero(dim_n, dim_n);
  std::array<int, TensorFunction::kOrderCap> dr{}, ds{}, dc{};
  for (std::int64_t r = 0; r < dim_n; ++r) {
    decode_multi(r, order, K, dr.data());
    for (int i = 0; i < m; ++i) ds[i] = dr[static_cast<size_t>(slots[static_cast<size_t>(i)])];
    const std::int64_t rs = encode_multi(ds.data(), m, K);
    for (std::int64_t cs = 0; cs < dim_m; ++cs) {
      const double v = op(rs, cs);
      if (v == 0.0) continue;
      decode_multi(cs, m, K, dc.data());
      std::array<int, TensorFunction::kOrderCap> dcol = dr;
      for (int i = 0; i < m; ++i)
        dcol[static_cast<size_t>(slots[static_cast<size_t>(i)])] = dc[i];
      out(r, encode_multi(dcol.data(), order, K)) += v;
    }
  }
  return out;
}

/// Extends a function of `arg_slots.size()` entities to `order` entities,
/// constant in the remaining slots: the listed slots carry the function's
/// arguments in order.
inline TensorFunction extend_constant(const TensorFunction& fn,
                                      const std::vector<int>& arg_slots,
                                      int order) {
  const int K = fn.space()->flat_count();
  const int m = fn.order();
  if (static_cast<int>(arg_slots.size()) != m)
    throw cap_error("extend_constant: slot count must match order");
  Vec out(ipow(K, order));
  std::array<int, TensorFunction::kOrderCap> d{}, sub{};
  for (std::int64_t f = 0; f < out.size(); ++f) {
    decode_multi(f, order, K, d.data());
    for (int i = 0; i < m; ++i)
      sub[i] = d[static_cast<size_t>(arg_slots[static_cast<size_t>(i)])];
    out[f] = fn.values()[encode_multi(sub.data(), m, K)];
  }
  return TensorFunction(fn.space(), order, fn.kind(), std::move(out));
}

/// Weighted integration over the trailing slots, keeping the first
/// `keep` arguments.
inline TensorFunction marginal_by_integration(const TensorFunction& fn,
                                              int keep) {
  const int n = fn.order();
  const int K = fn.space()->flat_count();
  if (keep < 0 || keep > n)
    throw cap_error("marginal_by_integration: bad argument count");
  const std::int64_t dim_keep = ipow(K, keep);
  const std::int64_t dim_tail = ipow(K, n - keep);
  Vec tail_w = multi_weight(*fn.space(), n - keep);
  Vec out = Vec::Zero(dim_keep);
  for (std::int64_t h = 0; h < dim_keep; ++h) {
    double acc = 0.0;
    for (std::int64_t t = 0; t < dim_tail; ++t)
      acc += tail_w[t] * fn.values()[h * dim_tail + t];
    out[h] = acc;
  }
  return TensorFunction(fn.space(), keep, fn.kind(), std::move(out));
}

inline TensorFunction tensor_product(const TensorFunction& a,
                                     const TensorFunction& b) {
  if (*a.space() != *b.space())
    throw cap_error("tensor_product: spaces differ");
  if (a.kind() != b.kind()) throw cap_error("tensor_product: kinds differ");
  const int order = a.order() + b.order();
  Vec out(ipow(a.space()->flat_count(), order));
  for (std::int64_t i = 0; i < a.flat_count(); ++i)
    for (std::int64_t j = 0; j < b.flat_count(); ++j)
      out[i * b.flat_count() + j] = a.values()[i] * b.values()[j];
  return TensorFunction(a.space(), order, a.kind(), std::move(out));
}

/// Finite sequence of tensor functions of orders 0..s_max, all of one kind.
/// Observable sequences keep the order-0 slot inert; state sequences pin it
/// to the constant 1.
class SequenceVector {
 public:
  SequenceVector(SpacePtr space, Kind kind, int s_max) : kind_(kind) {
    if (s_max < 0 || s_max > TensorFunction::kOrderCap)
      throw cap_error("sequence truncation outside 0.." +
                      std::to_string(TensorFunction::kOrderCap));
    components_.reserve(static_cast<size_t>(s_max) + 1);
    for (int n = 0; n <= s_max; ++n) components_.emplace_back(space, n, kind);
  }

  static SequenceVector state(SpacePtr space, int s_max) {
    SequenceVector f(std::move(space), Kind::state, s_max);
    f.component(0).values()[0] = 1.0;
    return f;
  }

  Kind kind() const { return kind_; }
  int s_max() const { return static_cast<int>(components_.size()) - 1; }
  const SpacePtr& space() const { return components_.front().space(); }

  TensorFunction& component(int n) { return components_.at(static_cast<size_t>(n)); }
  const TensorFunction& component(int n) const {
    return components_.at(static_cast<size_t>(n));
  }

 private:
  Kind kind_;
  std::vector<TensorFunction> components_;
};

/// Observable norm: max over orders of gamma^n / n! times the sup norm.
/// Finite for every truncated sequence; gamma must be positive.
inline double c_gamma_norm(const SequenceVector& b, double gamma) {
  if (!(gamma > 0.0)) throw cap_error("c_gamma_norm needs gamma > 0");
  double best = 0.0;
  double coeff = 1.0;  // gamma^n / n!
  for (int n = 0; n <= b.s_max(); ++n) {
    if (n > 0) coeff *= gamma / n;
    best = std::max(best, coeff * sup_norm(b.component(n)));
  }
  return best;
}

/// State norm: sum over orders of alpha^n times the weighted absolute mass.
inline double l1_alpha_norm(const SequenceVector& f, double alpha) {
  if (!(alpha > 0.0)) throw cap_error("l1_alpha_norm needs alpha > 0");
  double sum = 0.0;
  double coeff = 1.0;
  for (int n = 0; n <= f.s_max(); ++n) {
    if (n > 0) coeff *= alpha;
    sum += coeff * weighted_l1_norm(f.component(n));
  }
  return sum;
}

/// Duality pairing: sum over orders of 1/n! times the weighted overlap.
/// With `normalized` the value is divided by the pairing of the constant
/// unit observable with f.
inline double pair(const SequenceVector& b, const SequenceVector& f,
                   bool normalized = false) {
  if (*b.space() != *f.space()) throw cap_error("pair: spaces differ");
  const int top = std::min(b.s_max(), f.s_max());
  double acc = 0.0;
  double inv_fact = 1.0;
  for (int n = 0; n <= top; ++n) {
    if (n > 0) inv_fact /= n;
    const Vec w = multi_weight(*f.space(), n);
    acc += inv_fact *
           w.cwiseProduct(b.component(n).values())
               .dot(f.component(n).values());
  }
  if (!normalized) return acc;
  double denom = 0.0;
  inv_fact = 1.0;
  for (int n = 0; n <= f.s_max(); ++n) {
    if (n > 0) inv_fact /= n;
    denom += inv_fact *
             multi_weight(*f.space(), n).dot(f.component(n).values());
  }
  if (std::abs(denom) < 1e-300)
    throw numeric_error("pair: normalizing functional vanishes");
  return acc / denom;
}

}  // namespace kinhier
