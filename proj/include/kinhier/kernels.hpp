#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "kinhier/errors.hpp"
#include "kinhier/state_space.hpp"

namespace kinhier {

/// Jump kernels of a two-body Markov model: rates a1, a2 and destination
/// densities A1, A2.  Destination-first convention: A1(v, u) is the density
/// of jumping to v from u, normalized so that sum_v w(v) A1(v, u) = 1; A2
/// conditions on the partner state as well.
class KernelSet {
 public:
  KernelSet(Vec a1, Mat A1, Mat a2, std::vector<Mat> A2, std::string id = "inline")
      : a1_(std::move(a1)),
        A1_(std::move(A1)),
        a2_(std::move(a2)),
        A2_(std::move(A2)),
        id_(std::move(id)) {
    const auto K = a1_.size();
    if (A1_.rows() != K || A1_.cols() != K || a2_.rows() != K ||
        a2_.cols() != K || static_cast<Eigen::Index>(A2_.size()) != K)
      throw cap_error("kernel table shapes disagree");
    for (const Mat& m : A2_)
      if (m.rows() != K || m.cols() != K)
        throw cap_error("kernel table shapes disagree");
  }

  Eigen::Index K() const { return a1_.size(); }
  double a1(int u) const { return a1_[u]; }
  double A1(int v, int u) const { return A1_(v, u); }
  double a2(int u1, int u2) const { return a2_(u1, u2); }
  double A2(int v, int u1, int u2) const {
    return A2_[static_cast<size_t>(u2)](v, u1);
  }

  const Vec& a1_table() const { return a1_; }
  const Mat& A1_table() const { return A1_; }
  const Mat& a2_table() const { return a2_; }
  const std::vector<Mat>& A2_tables() const { return A2_; }
  const std::string& id() const { return id_; }

  double a1_bound() const { return a1_.size() ? a1_.cwiseAbs().maxCoeff() : 0.0; }
  double a2_bound() const {
    return a2_.size() ? a2_.cwiseAbs().maxCoeff() : 0.0;
  }

  /// Same one-body tables, two-body rates identically zero (the
  /// interaction-free companion model).
  KernelSet without_two_body() const {
    KernelSet out = *this;
    out.a2_.setZero();
    out.id_ = id_ + "+a2=0";
    return out;
  }

 private:
  Vec a1_;
  Mat A1_;
  Mat a2_;
  std::vector<Mat> A2_;
  std::string id_;
};

struct KernelDiagnostics {
  double a1_normalization_defect = 0.0;  // max_u |sum_v w(v)A1(v,u) - 1|
  double a2_normalization_defect = 0.0;
  double most_negative_entry = 0.0;      // min over all tables, clamped at 0
  double a1_bound = 0.0;
  double a2_bound = 0.0;

  bool pass(double tol = 1e-12) const {
    return a1_normalization_defect <= tol && a2_normalization_defect <= tol &&
           most_negative_entry >= -tol;
  }
};

inline KernelDiagnostics validate_kernels(const KernelSet& k,
                                          const EntitySpace& space) {
  const int K = space.flat_count();
  if (k.K() != K) throw cap_error("kernel tables sized for a different space");
  KernelDiagnostics d;
  d.a1_bound = k.a1_bound();
  d.a2_bound = k.a2_bound();
  for (int u = 0; u < K; ++u) {
    double s = 0.0;
    for (int v = 0; v < K; ++v) s += space.weight(v) * k.A1(v, u);
    d.a1_normalization_defect =
        std::max(d.a1_normalization_defect, std::abs(s - 1.0));
  }
  for (int u1 = 0; u1 < K; ++u1)
    for (int u2 = 0; u2 < K; ++u2) {
      double s = 0.0;
      for (int v = 0; v < K; ++v) s += space.weight(v) * k.A2(v, u1, u2);
      d.a2_normalization_defect =
          std::max(d.a2_normalization_defect, std::abs(s - 1.0));
    }
  double lowest = 0.0;
  lowest = std::min(lowest, k.a1_table().minCoeff());
  lowest = std::min(lowest, k.A1_table().minCoeff());
  lowest = std::min(lowest, k.a2_table().minCoeff());
  for (const Mat& m : k.A2_tables()) lowest = std::min(lowest, m.minCoeff());
  d.most_negative_entry = lowest;
  return d;
}

namespace detail {

// Normalizes a nonnegative column so that sum_v w(v) col(v) = 1.
inline void w_normalize(Vec& col, const EntitySpace& space) {
  double s = 0.0;
  for (int v = 0; v < space.flat_count(); ++v) s += space.weight(v) * col[v];
  if (!(s > 0.0)) throw numeric_error("cannot normalize a zero density");
  col /= s;
}

}  // namespace detail

/// Catalog entry: every destination equally likely under the weighted
/// measure, constant rates.
inline KernelSet uniform_redistribution_kernels(const EntitySpace& space,
                                                double a1_rate,
                                                double a2_rate) {
  const int K = space.flat_count();
  const double density = 1.0 / space.total_weight();
  Vec a1 = Vec::Constant(K, a1_rate);
  Mat A1 = Mat::Constant(K, K, density);
  Mat a2 = Mat::Constant(K, K, a2_rate);
  std::vector<Mat> A2(static_cast<size_t>(K), Mat::Constant(K, K, density));
  return KernelSet(std::move(a1), std::move(A1), std::move(a2), std::move(A2),
                   "uniform-redistribution");
}

/// Catalog entry: one-body jumps concentrated near the current grid position
/// within the same subpopulation; two-body jumps follow the same profile
/// around the mover's position, the partner only modulates the rate.
inline KernelSet local_diffusion_kernels(const EntitySpace& space,
                                         double a1_rate, double a2_rate,
                                         double sigma = 0.25) {
  const int K = space.flat_count();
  auto profile = [&](int v, int u) {
    if (space.subpopulation(v) != space.subpopulation(u)) return 0.0;
    const double d = space.position(v) - space.position(u);
    return std::exp(-d * d / (2.0 * sigma * sigma));
  };
  Mat A1(K, K);
  for (int u = 0; u < K; ++u) {
    Vec col(K);
    for (int v = 0; v < K; ++v) col[v] = profile(v, u);
    detail::w_normalize(col, space);
    A1.col(u) = col;
  }
  Vec a1 = Vec::Constant(K, a1_rate);
  Mat a2 = Mat::Constant(K, K, a2_rate);
  std::vector<Mat> A2(static_cast<size_t>(K), A1);
  return KernelSet(std::move(a1), std::move(A1), std::move(a2), std::move(A2),
                   "local-diffusion");
}

/// Catalog entry: two-body jumps pull the mover toward the partner's state
/// (both subpopulation and position), one-body jumps redistribute uniformly.
inline KernelSet alignment_kernels(const EntitySpace& space, double a1_rate,
                                   double a2_rate, double sigma = 0.25,
                                   double cross = 0.1) {
  const int K = space.flat_count();
  const double density = 1.0 / space.total_weight();
  Vec a1 = Vec::Constant(K, a1_rate);
  Mat A1 = Mat::Constant(K, K, density);
  Mat a2 = Mat::Constant(K, K, a2_rate);
  std::vector<Mat> A2(static_cast<size_t>(K));
  for (int u2 = 0; u2 < K; ++u2) {
    Mat table(K, K);
    for (int u1 = 0; u1 < K; ++u1) {
      Vec col(K);
      for (int v = 0; v < K; ++v) {
        const double d = space.position(v) - space.position(u2);
        double raw = std::exp(-d * d / (2.0 * sigma * sigma));
        if (space.subpopulation(v) != space.subpopulation(u2)) raw *= cross;
        col[v] = raw;
      }
      detail::w_normalize(col, space);
      table.col(u1) = col;
    }
    A2[static_cast<size_t>(u2)] = table;
  }
  return KernelSet(std::move(a1), std::move(A1), std::move(a2), std::move(A2),
                   "alignment");
}

/// Random valid kernels for property tests: rates uniform in [scale/2, scale],
/// densities drawn positive then w-normalized.
inline KernelSet random_kernels(const EntitySpace& space, std::mt19937_64& rng,
                                double a1_scale = 1.0, double a2_scale = 1.0) {
  const int K = space.flat_count();
  std::uniform_real_distribution<double> rate(0.5, 1.0);
  std::uniform_real_distribution<double> dens(0.1, 1.0);
  Vec a1(K);
  for (int u = 0; u < K; ++u) a1[u] = a1_scale * rate(rng);
  Mat A1(K, K);
  for (int u = 0; u < K; ++u) {
    Vec col(K);
    for (int v = 0; v < K; ++v) col[v] = dens(rng);
    detail::w_normalize(col, space);
    A1.col(u) = col;
  }
  Mat a2(K, K);
  for (int u1 = 0; u1 < K; ++u1)
    for (int u2 = 0; u2 < K; ++u2) a2(u1, u2) = a2_scale * rate(rng);
  std::vector<Mat> A2(static_cast<size_t>(K));
  for (int u2 = 0; u2 < K; ++u2) {
    Mat table(K, K);
    for (int u1 = 0; u1 < K; ++u1) {
      Vec col(K);
      for (int v = 0; v < K; ++v) col[v] = dens(rng);
      detail::w_normalize(col, space);
      table.col(u1) = col;
    }
    A2[static_cast<size_t>(u2)] = table;
  }
  return KernelSet(std::move(a1), std::move(A1), std::move(a2), std::move(A2),
                   "random");
}

}  // namespace kinhier
