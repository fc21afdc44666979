#pragma once

// Steady-state MSD predictions for exact subspace diffusion with E = 1:
//   exact series   (mu^2 / K) Tr( sum_n C^n Y C^n ),  C = A (I - mu H*),  Y = A R* A
//   small step     (mu / 2K)  Tr( (U^T H* U)^{-1} U^T R* U )

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>

#include "subdiff/errors.hpp"

namespace subdiff {

struct TheoryInputs {
  MatrixXd A;
  MatrixXd H_star;
  MatrixXd R_star;
  MatrixXd U;
  double mu = 0.0;
  int K = 1;
};

enum class SeriesVariant {
  Printed,     // C^n Y C^n
  Transposed,  // C^n Y (C^T)^n
};

enum class SeriesMethod {
  Doubling,  // S_{2N} = S_N + C^N S_N C^N
  Iterate,   // X_{n+1} = C X_n C
};

struct SeriesOptions {
  double rel_tol = 1e-12;
  std::int64_t n_max = 1'000'000;
  SeriesVariant variant = SeriesVariant::Printed;
  SeriesMethod method = SeriesMethod::Doubling;
};

struct SeriesResult {
  double msd = 0.0;
  std::int64_t terms = 0;  // number of series terms summed
  double spectral_radius = 0.0;
};

/// rho of a general square matrix from its full eigenvalue set.
inline double spectral_radius(const MatrixXd& C) {
  Eigen::EigenSolver<MatrixXd> es(C, false);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::EigenFailure, "eigensolver did not converge");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline MatrixXd series_matrix(const TheoryInputs& in) {
  const Eigen::Index n = in.A.rows();
  return in.A * (MatrixXd::Identity(n, n) - in.mu * in.H_star);
}

inline SeriesResult msd_exact_detailed(const TheoryInputs& in, const SeriesOptions& opt = {}) {
  if (!(opt.rel_tol > 0.0)) throw Error(ErrorKind::InvalidConfig, "rel_tol must be positive");
  const MatrixXd C = series_matrix(in);
  SeriesResult res;
  res.spectral_radius = spectral_radius(C);
  if (!(res.spectral_radius < 1.0)) {
    throw Error(ErrorKind::SeriesDiverges,
                "rho(C) = " + std::to_string(res.spectral_radius) + " >= 1");
  }
  const MatrixXd Y = in.A * in.R_star * in.A;
  const bool transposed = opt.variant == SeriesVariant::Transposed;
  const double scale = in.mu * in.mu / in.K;

  if (opt.method == SeriesMethod::Iterate) {
    MatrixXd X = Y;
    double sum = 0.0;
    for (std::int64_t n = 0; n <= opt.n_max; ++n) {
      const double term = X.trace();
      sum += term;
      res.terms = n + 1;
      if (std::abs(term) < opt.rel_tol * std::abs(sum) || sum == 0.0) {
        res.msd = scale * sum;
        return res;
      }
      X = transposed ? MatrixXd(C * X * C.transpose()) : MatrixXd(C * X * C);
    }
    throw Error(ErrorKind::NotConverged, "series not converged after n_max terms");
  }

  // S holds the partial sum over n < N, Cp = C^N.
  MatrixXd S = Y;
  MatrixXd Cp = C;
  std::int64_t N = 1;
  double sum = S.trace();
  if (sum == 0.0 && S.norm() == 0.0) {
    res.terms = 1;
    return res;
  }
  while (true) {
    const MatrixXd T = transposed ? MatrixXd(Cp * S * Cp.transpose()) : MatrixXd(Cp * S * Cp);
    const double block = T.trace();
    S += T;
    sum += block;
    N *= 2;
    res.terms = N;
    if (std::abs(block) < opt.rel_tol * std::abs(sum)) break;
    if (N >= opt.n_max) {
      throw Error(ErrorKind::NotConverged, "series not converged after n_max terms");
    }
    Cp = Cp * Cp;
  }
  res.msd = scale * sum;
  return res;
}

inline double msd_exact(const TheoryInputs& in, double rel_tol = 1e-12,
                        std::int64_t n_max = 1'000'000) {
  SeriesOptions opt;
  opt.rel_tol = rel_tol;
  opt.n_max = n_max;
  return msd_exact_detailed(in, opt).msd;
}

/// Also the small-step performance of centralized projected SGD.
inline double msd_small_mu(const TheoryInputs& in) {
  const MatrixXd G = in.U.transpose() * in.H_star * in.U;
  Eigen::LDLT<MatrixXd> ldlt(G);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().cwiseAbs().maxCoeff()) {
    throw Error(ErrorKind::SingularProjection, "U^T H U is singular");
  }
  const MatrixXd UR = in.U.transpose() * in.R_star * in.U;
  return in.mu / (2.0 * in.K) * ldlt.solve(UR).trace();
}

}  // namespace subdiff
