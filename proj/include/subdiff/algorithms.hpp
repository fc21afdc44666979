#pragma once

// Synchronous-round recursions: exact subspace diffusion with E local
// updates, approximate-projection diffusion (adapt then combine with A),
// DiSPO (combine with A, then adapt) and centralized projected SGD.

#include <Eigen/Dense>

#include <concepts>
#include <cstdint>
#include <string>
#include <string_view>

#include "subdiff/combiner.hpp"
#include "subdiff/errors.hpp"
#include "subdiff/netgraph.hpp"
#include "subdiff/problem.hpp"

namespace subdiff {

template <class G>
concept GradientOracle = requires(G& g, int k, Eigen::Ref<const VectorXd> w, Eigen::Ref<VectorXd> out) {
  g.gradient(k, w, out);
};

/// Anything exposing M x M blocks [X]_{k l} on the neighborhood pattern.
template <class Op>
concept BlockOperator = requires(const Op& op, int k, int l) {
  { op.agents() } -> std::convertible_to<int>;
  { op.block_dim() } -> std::convertible_to<int>;
  { *op.neighbors(k).begin() } -> std::convertible_to<int>;
  { op.block(k, l) } -> std::convertible_to<const MatrixXd&>;
};

inline constexpr double kDivergenceThreshold = 1e12;

inline void check_iterate(const VectorXd& w, std::int64_t iteration) {
  if (!w.allFinite() || w.norm() > kDivergenceThreshold) {
    throw Error(ErrorKind::NonFiniteIterate,
                "iterate diverged at iteration " + std::to_string(iteration));
  }
}

/// out_k = sum_{l in N_k} [X]_{k l} x_l. Only neighbor blocks are read.
template <BlockOperator Op>
void apply_blocks(const Op& op, const VectorXd& x, VectorXd& out) {
  if constexpr (requires { op.apply(x, out); }) {
    op.apply(x, out);
    return;
  }
  const int K = op.agents();
  const int M = op.block_dim();
  out.resize(x.size());
  for (int k = 0; k < K; ++k) {
    auto o = out.segment(k * M, M);
    o.setZero();
    for (int l : op.neighbors(k)) o.noalias() += op.block(k, l) * x.segment(l * M, M);
  }
}

struct ExactDiffusionState {
  VectorXd w;
  VectorXd psi_prev;  // col{psi_{k,i-1,E}}
  std::int64_t iteration = 0;
  double mu = 0.0;
  int E = 1;
  // scratch
  VectorXd psi, phi, grad;
};

/// w_{k,0} = w0 (zero by default) and psi_{k,0,E} = w_{k,0}.
inline ExactDiffusionState init_exact_diffusion(int KM, double mu, int E,
                                                const VectorXd* w0 = nullptr) {
  if (E < 1) throw Error(ErrorKind::InvalidConfig, "E must be >= 1");
  ExactDiffusionState s;
  s.w = w0 ? *w0 : VectorXd::Zero(KM);
  s.psi_prev = s.w;
  s.mu = mu;
  s.E = E;
  return s;
}

template <BlockOperator Op, GradientOracle G>
void step_exact_diffusion(ExactDiffusionState& s, const Op& abar, G& grad) {
  const int K = abar.agents();
  const int M = abar.block_dim();
  const double step = s.mu / s.E;
  s.psi = s.w;
  s.grad.resize(M);
  for (int k = 0; k < K; ++k) {
    auto psi_k = s.psi.segment(k * M, M);
    for (int e = 0; e < s.E; ++e) {
      grad.gradient(k, psi_k, s.grad);
      psi_k -= step * s.grad;
    }
  }
  s.phi = s.w + s.psi - s.psi_prev;
  apply_blocks(abar, s.phi, s.w);
  s.psi_prev.swap(s.psi);
  ++s.iteration;
  check_iterate(s.w, s.iteration);
}

template <GradientOracle G>
void step_exact_diffusion(ExactDiffusionState& s, const BlockCombiner& c, G& grad) {
  step_exact_diffusion(s, c.Abar_blocks, grad);
}

struct BaselineState {
  VectorXd w;
  std::int64_t iteration = 0;
  double mu = 0.0;
  VectorXd work, grad;
};

inline BaselineState init_baseline(int KM, double mu, const VectorXd* w0 = nullptr) {
  BaselineState s;
  s.w = w0 ? *w0 : VectorXd::Zero(KM);
  s.mu = mu;
  return s;
}

namespace detail {

template <GradientOracle G>
void gradient_step(VectorXd& out, const VectorXd& w, double mu, int K, int M, VectorXd& g,
                   G& grad) {
  out.resize(w.size());
  g.resize(M);
  for (int k = 0; k < K; ++k) {
    grad.gradient(k, w.segment(k * M, M), g);
    out.segment(k * M, M) = w.segment(k * M, M) - mu * g;
  }
}

}  // namespace detail

/// w_{k,i} = sum_l A_{k l} (w_{l,i-1} - mu grad_l(w_{l,i-1})).
template <BlockOperator Op, GradientOracle G>
void step_approx_projection(BaselineState& s, const Op& a, G& grad) {
  detail::gradient_step(s.work, s.w, s.mu, a.agents(), a.block_dim(), s.grad, grad);
  apply_blocks(a, s.work, s.w);
  ++s.iteration;
  check_iterate(s.w, s.iteration);
}

template <GradientOracle G>
void step_approx_projection(BaselineState& s, const BlockCombiner& c, G& grad) {
  step_approx_projection(s, c.A_blocks, grad);
}

/// w_{k,i} = sum_l A_{k l} w_{l,i-1} - mu grad_k(w_{k,i-1}).
template <BlockOperator Op, GradientOracle G>
void step_dispo(BaselineState& s, const Op& a, G& grad) {
  const int K = a.agents();
  const int M = a.block_dim();
  apply_blocks(a, s.w, s.work);
  s.grad.resize(M);
  for (int k = 0; k < K; ++k) {
    grad.gradient(k, s.w.segment(k * M, M), s.grad);
    s.work.segment(k * M, M) -= s.mu * s.grad;
  }
  s.w.swap(s.work);
  ++s.iteration;
  check_iterate(s.w, s.iteration);
}

template <GradientOracle G>
void step_dispo(BaselineState& s, const BlockCombiner& c, G& grad) {
  step_dispo(s, c.A_blocks, grad);
}

/// w_i = P_U (w_{i-1} - mu grad(w_{i-1})), with the dense projector.
template <GradientOracle G>
void step_centralized(BaselineState& s, const Subspace& subspace, G& grad) {
  detail::gradient_step(s.work, s.w, s.mu, subspace.agents(), subspace.M, s.grad, grad);
  s.w.noalias() = subspace.projector * s.work;
  ++s.iteration;
  check_iterate(s.w, s.iteration);
}

// ---------------------------------------------------------------------------

enum class Algorithm { ExactDiffusion, ApproxProjection, Dispo, Centralized };

constexpr std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::ExactDiffusion: return "exact_diffusion";
    case Algorithm::ApproxProjection: return "approx_projection";
    case Algorithm::Dispo: return "dispo";
    case Algorithm::Centralized: return "centralized";
  }
  return "unknown";
}

inline Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::ExactDiffusion, Algorithm::ApproxProjection, Algorithm::Dispo,
                      Algorithm::Centralized}) {
    if (algorithm_name(a) == name) return a;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown algorithm '" + std::string(name) + "'");
}

/// Type-erased driver over the four recursions, one per simulated trajectory.
class AlgorithmRun {
 public:
  AlgorithmRun(Algorithm algorithm, const BlockCombiner& combiner, const Subspace& subspace,
               double mu, int E)
      : algorithm_(algorithm), combiner_(&combiner), subspace_(&subspace) {
    const int KM = subspace.dim();
    if (algorithm == Algorithm::ExactDiffusion) {
      exact_ = init_exact_diffusion(KM, mu, E);
    } else {
      baseline_ = init_baseline(KM, mu);
    }
  }

  template <GradientOracle G>
  void step(G& grad) {
    switch (algorithm_) {
      case Algorithm::ExactDiffusion: step_exact_diffusion(exact_, *combiner_, grad); break;
      case Algorithm::ApproxProjection: step_approx_projection(baseline_, *combiner_, grad); break;
      case Algorithm::Dispo: step_dispo(baseline_, *combiner_, grad); break;
      case Algorithm::Centralized: step_centralized(baseline_, *subspace_, grad); break;
    }
  }

  const VectorXd& w() const {
    return algorithm_ == Algorithm::ExactDiffusion ? exact_.w : baseline_.w;
  }

  Algorithm algorithm() const { return algorithm_; }

 private:
  Algorithm algorithm_;
  const BlockCombiner* combiner_;
  const Subspace* subspace_;
  ExactDiffusionState exact_;
  BaselineState baseline_;
};

}  // namespace subdiff
