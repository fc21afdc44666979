#pragma once

// Streaming linear regression over the network: gamma = h^T w_k^o + v with
// h ~ N(0, sigma_h^2 I_M) and v ~ N(0, sigma_v^2), loss (1/2)(gamma - h^T w)^2.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "subdiff/errors.hpp"
#include "subdiff/netgraph.hpp"
#include "subdiff/rng.hpp"

namespace subdiff {

struct QuadraticNetworkProblem {
  int K = 0;
  int M = 0;
  VectorXd w_o;       // col{w_k^o}
  VectorXd sigma_h2;  // per agent
  VectorXd sigma_v2;  // per agent
  Subspace subspace;

  auto target(int k) const { return w_o.segment(k * M, M); }
};

struct DataSample {
  VectorXd h;
  double gamma = 0.0;
};

/// Validates shapes and strictly positive regressor variances. Noise
/// variances may be zero (noiseless observations).
inline QuadraticNetworkProblem make_problem(Subspace subspace, VectorXd w_o, VectorXd sigma_h2,
                                            VectorXd sigma_v2) {
  QuadraticNetworkProblem p;
  p.M = subspace.M;
  p.K = subspace.agents();
  if (w_o.size() != p.K * p.M || sigma_h2.size() != p.K || sigma_v2.size() != p.K) {
    throw Error(ErrorKind::InvalidConfig, "problem dimensions do not match the subspace");
  }
  if ((sigma_h2.array() <= 0.0).any() || (sigma_v2.array() < 0.0).any()) {
    throw Error(ErrorKind::InvalidConfig, "variances must be positive");
  }
  p.w_o = std::move(w_o);
  p.sigma_h2 = std::move(sigma_h2);
  p.sigma_v2 = std::move(sigma_v2);
  p.subspace = std::move(subspace);
  return p;
}

struct VarianceRanges {
  std::pair<double, double> sigma_h2{0.5, 2.0};
  std::pair<double, double> sigma_v2{0.2, 0.8};
};

/// Draws sigma_h^2 for every agent, then sigma_v^2, from one dedicated stream.
inline QuadraticNetworkProblem make_random_problem(Subspace subspace, VectorXd w_o,
                                                   const VarianceRanges& ranges,
                                                   std::uint64_t seed) {
  const int K = subspace.agents();
  Rng rng(seed);
  std::uniform_real_distribution<double> uh(ranges.sigma_h2.first, ranges.sigma_h2.second);
  std::uniform_real_distribution<double> uv(ranges.sigma_v2.first, ranges.sigma_v2.second);
  VectorXd sh(K), sv(K);
  for (int k = 0; k < K; ++k) sh(k) = uh(rng);
  for (int k = 0; k < K; ++k) sv(k) = uv(rng);
  return make_problem(std::move(subspace), std::move(w_o), std::move(sh), std::move(sv));
}

/// Draws into preallocated storage (h must have size M).
inline void sample_into(const QuadraticNetworkProblem& p, int k, Rng& rng, Eigen::Ref<VectorXd> h,
                        double& gamma) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sh = std::sqrt(p.sigma_h2(k));
  for (int a = 0; a < p.M; ++a) h(a) = sh * normal(rng);
  const double v = std::sqrt(p.sigma_v2(k)) * normal(rng);
  gamma = h.dot(p.target(k)) + v;
}

inline DataSample sample(const QuadraticNetworkProblem& p, int k, Rng& rng) {
  DataSample s;
  s.h.resize(p.M);
  sample_into(p, k, rng, s.h, s.gamma);
  return s;
}

inline VectorXd stochastic_gradient(const QuadraticNetworkProblem& p, int k,
                                    const Eigen::Ref<const VectorXd>& w_k, const DataSample& s) {
  (void)p;
  (void)k;
  return s.h * (s.h.dot(w_k) - s.gamma);
}

inline VectorXd true_gradient(const QuadraticNetworkProblem& p, int k,
                              const Eigen::Ref<const VectorXd>& w_k) {
  return p.sigma_h2(k) * (w_k - p.target(k));
}

inline MatrixXd hessian(const QuadraticNetworkProblem& p, int k) {
  return p.sigma_h2(k) * MatrixXd::Identity(p.M, p.M);
}

/// J_k(w) = (1/2) sigma_h^2 |w - w_k^o|^2 + (1/2) sigma_v^2.
inline double risk(const QuadraticNetworkProblem& p, int k, const Eigen::Ref<const VectorXd>& w_k) {
  return 0.5 * p.sigma_h2(k) * (w_k - p.target(k)).squaredNorm() + 0.5 * p.sigma_v2(k);
}

inline double network_risk(const QuadraticNetworkProblem& p, const VectorXd& w) {
  double sum = 0.0;
  for (int k = 0; k < p.K; ++k) sum += risk(p, k, w.segment(k * p.M, p.M));
  return sum;
}

inline VectorXd network_gradient(const QuadraticNetworkProblem& p, const VectorXd& w) {
  VectorXd g(w.size());
  for (int k = 0; k < p.K; ++k) g.segment(k * p.M, p.M) = true_gradient(p, k, w.segment(k * p.M, p.M));
  return g;
}

/// H* = diag{sigma_{h,k}^2 I_M}.
inline MatrixXd network_hessian(const QuadraticNetworkProblem& p) {
  VectorXd d(p.K * p.M);
  for (int k = 0; k < p.K; ++k) d.segment(k * p.M, p.M).setConstant(p.sigma_h2(k));
  return d.asDiagonal();
}

/// w* = U (U^T H U)^{-1} U^T H w^o.
inline VectorXd optimum(const QuadraticNetworkProblem& p) {
  const MatrixXd& U = p.subspace.U;
  const MatrixXd H = network_hessian(p);
  const MatrixXd G = U.transpose() * H * U;
  Eigen::LLT<MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularProjection, "U^T H U is not positive definite");
  }
  // Condition estimate from the Cholesky factor's diagonal.
  const VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  if (diag.minCoeff() <= 1e-10 * diag.maxCoeff()) {
    throw Error(ErrorKind::SingularProjection, "U^T H U is numerically singular");
  }
  const VectorXd w_star = U * llt.solve(U.transpose() * (H * p.w_o));
  const double stationarity = (U.transpose() * network_gradient(p, w_star)).norm();
  if (stationarity > 1e-9 * std::max(1.0, (H * p.w_o).norm())) {
    throw Error(ErrorKind::SingularProjection,
                "optimum fails stationarity check (" + std::to_string(stationarity) + ")");
  }
  return w_star;
}

/// R_{s,k}* = sigma_v^2 sigma_h^2 I + sigma_h^4 (e e^T + |e|^2 I) with
/// e = w_k* - w_k^o, from the Gaussian fourth-moment identity. Returned as
/// the block-diagonal KM x KM matrix diag{R_{s,k}*}.
inline MatrixXd noise_covariance_at_optimum(const QuadraticNetworkProblem& p,
                                            const VectorXd& w_star) {
  const int M = p.M;
  MatrixXd R = MatrixXd::Zero(p.K * M, p.K * M);
  const MatrixXd I = MatrixXd::Identity(M, M);
  for (int k = 0; k < p.K; ++k) {
    const VectorXd e = w_star.segment(k * M, M) - p.target(k);
    const double sh2 = p.sigma_h2(k);
    R.block(k * M, k * M, M, M) =
        p.sigma_v2(k) * sh2 * I + sh2 * sh2 * (e * e.transpose() + e.squaredNorm() * I);
  }
  return R;
}

inline MatrixXd noise_covariance_at_optimum(const QuadraticNetworkProblem& p) {
  return noise_covariance_at_optimum(p, optimum(p));
}

enum class GradientMode { Stochastic, Exact };

/// Per-agent gradient oracle used by every algorithm. Owns its RNG stream so
/// exact and stochastic runs share one code path; in Exact mode the stream
/// is never advanced.
class GradientSource {
 public:
  GradientSource(const QuadraticNetworkProblem& problem, GradientMode mode, std::uint64_t seed)
      : problem_(&problem), mode_(mode), rng_(seed), h_(problem.M) {}

  int agents() const { return problem_->K; }
  int dim() const { return problem_->M; }
  GradientMode mode() const { return mode_; }

  void gradient(int k, const Eigen::Ref<const VectorXd>& w_k, Eigen::Ref<VectorXd> out) {
    const QuadraticNetworkProblem& p = *problem_;
    if (mode_ == GradientMode::Exact) {
      out = p.sigma_h2(k) * (w_k - p.target(k));
      return;
    }
    double gamma = 0.0;
    sample_into(p, k, rng_, h_, gamma);
    out = h_ * (h_.dot(w_k) - gamma);
  }

 private:
  const QuadraticNetworkProblem* problem_;
  GradientMode mode_;
  Rng rng_;
  VectorXd h_;
};

}  // namespace subdiff
