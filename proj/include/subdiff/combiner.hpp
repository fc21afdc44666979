#pragma once

// Block-sparse combination matrices A with A P_U = P_U and rho(P_U - A) < 1.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "subdiff/errors.hpp"
#include "subdiff/netgraph.hpp"

namespace subdiff {

/// KM x KM matrix stored as M x M blocks on the graph pattern. Row k holds
/// the blocks [X]_{k l} for l in N_k, so (X w)_k = sum_l [X]_{k l} w_l.
class BlockSparseMatrix {
 public:
  BlockSparseMatrix() = default;

  BlockSparseMatrix(const MatrixXd& dense, const NetworkTopology& topology, int M)
      : K_(topology.K), M_(M), cols_(topology.neighborhoods) {
    blocks_.resize(K_);
    for (int k = 0; k < K_; ++k) {
      blocks_[k].reserve(cols_[k].size());
      for (int l : cols_[k]) blocks_[k].push_back(dense.block(k * M, l * M, M, M));
    }
    scalar_ = true;
    for (int k = 0; k < K_ && scalar_; ++k) {
      for (const MatrixXd& b : blocks_[k]) {
        if (b != b(0, 0) * MatrixXd::Identity(M, M)) {
          scalar_ = false;
          break;
        }
      }
    }
    if (scalar_) {
      weights_.resize(K_);
      for (int k = 0; k < K_; ++k) {
        for (const MatrixXd& b : blocks_[k]) weights_[k].push_back(b(0, 0));
      }
    }
  }

  int agents() const { return K_; }
  int block_dim() const { return M_; }
  std::span<const int> neighbors(int k) const { return cols_[k]; }

  const MatrixXd& block(int k, int l) const {
    const auto& c = cols_[k];
    const auto it = std::lower_bound(c.begin(), c.end(), l);
    if (it == c.end() || *it != l) {
      throw std::out_of_range("block outside the neighborhood pattern");
    }
    return blocks_[k][static_cast<std::size_t>(it - c.begin())];
  }

  std::span<const MatrixXd> row_blocks(int k) const { return blocks_[k]; }

  /// True when every block is a multiple of I_M.
  bool scalar_blocks() const { return scalar_; }

  /// out = X x, walking each row's blocks in order.
  void apply(const VectorXd& x, VectorXd& out) const {
    out.resize(x.size());
    for (int k = 0; k < K_; ++k) {
      auto o = out.segment(k * M_, M_);
      o.setZero();
      const auto& c = cols_[k];
      if (scalar_) {
        for (std::size_t n = 0; n < c.size(); ++n) o += weights_[k][n] * x.segment(c[n] * M_, M_);
      } else {
        for (std::size_t n = 0; n < c.size(); ++n) o.noalias() += blocks_[k][n] * x.segment(c[n] * M_, M_);
      }
    }
  }

  MatrixXd dense() const {
    MatrixXd out = MatrixXd::Zero(K_ * M_, K_ * M_);
    for (int k = 0; k < K_; ++k) {
      for (std::size_t n = 0; n < cols_[k].size(); ++n) {
        out.block(k * M_, cols_[k][n] * M_, M_, M_) = blocks_[k][n];
      }
    }
    return out;
  }

 private:
  int K_ = 0;
  int M_ = 1;
  std::vector<std::vector<int>> cols_;
  std::vector<std::vector<MatrixXd>> blocks_;
  bool scalar_ = false;
  std::vector<std::vector<double>> weights_;
};

struct BlockCombiner {
  int M = 1;
  MatrixXd A;
  MatrixXd Abar;  // (I + A) / 2
  MatrixXd B;     // ((I - A) / 2)^{1/2}
  double lambda_A = 0.0;     // rho(P_U - A)
  double lambda_Abar = 0.0;  // rho(Abar - P_U)
  BlockSparseMatrix A_blocks;
  BlockSparseMatrix Abar_blocks;
};

inline double symmetric_spectral_radius(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::EigenFailure, "symmetric eigensolver did not converge");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Symmetric PSD square root; eigenvalues in [-1e-10, 0) are clamped to zero.
inline MatrixXd matrix_sqrt_psd(const MatrixXd& S) {
  const MatrixXd Ssym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Ssym);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::EigenFailure, "symmetric eigensolver did not converge");
  }
  VectorXd ev = es.eigenvalues();
  if (ev.size() > 0 && ev.minCoeff() < -1e-10) {
    throw Error(ErrorKind::NotPSD, "matrix has eigenvalue " + std::to_string(ev.minCoeff()));
  }
  // Roundoff-level eigenvalues are set to zero.
  const double floor = 1e-12 * std::max(1.0, ev.size() > 0 ? ev.cwiseAbs().maxCoeff() : 0.0);
  ev = (ev.array() <= floor).select(0.0, ev).cwiseSqrt();
  const MatrixXd& Q = es.eigenvectors();
  MatrixXd R = Q * ev.asDiagonal() * Q.transpose();
  return 0.5 * (R + R.transpose());
}

/// Derive Abar, B and the spectral quantities from a given A. A non-symmetric
/// input is replaced by (A + A^T) / 2. No validation happens here.
inline BlockCombiner assemble_combiner(const MatrixXd& A, const Subspace& subspace,
                                       const NetworkTopology& topology) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || n != subspace.dim() || topology.K * subspace.M != n) {
    throw Error(ErrorKind::InvalidConfig, "combiner dimensions do not match the subspace");
  }
  BlockCombiner c;
  c.M = subspace.M;
  c.A = 0.5 * (A + A.transpose());
  const MatrixXd I = MatrixXd::Identity(n, n);
  c.Abar = 0.5 * (I + c.A);
  c.B = matrix_sqrt_psd(0.5 * (I - c.A));
  c.lambda_A = symmetric_spectral_radius(subspace.projector - c.A);
  c.lambda_Abar = symmetric_spectral_radius(c.Abar - subspace.projector);
  c.A_blocks = BlockSparseMatrix(c.A, topology, c.M);
  c.Abar_blocks = BlockSparseMatrix(c.Abar, topology, c.M);
  return c;
}

struct CombinerReport {
  double tol = 0.0;
  int sparsity_violations = 0;
  double max_off_pattern = 0.0;
  double ap_residual = 0.0;  // max(|A P_U - P_U|_F, |P_U A - P_U|_F)
  double symmetry_residual = 0.0;
  double lambda_A = 0.0;
  double sqrt_residual = 0.0;  // |B^2 - (I - A)/2|_F
  double pb_residual = 0.0;    // |P_U B|_F
  double lambda_Abar = 0.0;

  bool sparsity_ok() const { return sparsity_violations == 0; }
  bool ap_ok() const { return ap_residual <= tol; }
  bool symmetry_ok() const { return symmetry_residual <= tol; }
  bool spectral_ok() const { return lambda_A < 1.0; }
  bool sqrt_ok() const { return sqrt_residual <= tol; }
  bool pb_ok() const { return pb_residual <= tol; }
  bool abar_bound_ok() const {
    return lambda_Abar <= 0.5 * (1.0 + lambda_A) + tol && lambda_Abar < 1.0;
  }
  bool all_ok() const {
    return sparsity_ok() && ap_ok() && symmetry_ok() && spectral_ok() && sqrt_ok() &&
           pb_ok() && abar_bound_ok();
  }
};

inline CombinerReport verify_combiner(const BlockCombiner& c, const Subspace& subspace,
                                      const NetworkTopology& topology, double tol) {
  CombinerReport r;
  r.tol = tol;
  const int M = c.M;
  const MatrixXd& P = subspace.projector;
  for (int k = 0; k < topology.K; ++k) {
    for (int l = 0; l < topology.K; ++l) {
      if (topology.is_neighbor(k, l)) continue;
      const double m = c.A.block(k * M, l * M, M, M).cwiseAbs().maxCoeff();
      r.max_off_pattern = std::max(r.max_off_pattern, m);
      if (m > tol) ++r.sparsity_violations;
    }
  }
  r.ap_residual = std::max((c.A * P - P).norm(), (P * c.A - P).norm());
  r.symmetry_residual = (c.A - c.A.transpose()).norm();
  r.lambda_A = c.lambda_A;
  const MatrixXd I = MatrixXd::Identity(c.A.rows(), c.A.cols());
  r.sqrt_residual = (c.B * c.B - 0.5 * (I - c.A)).norm();
  r.pb_residual = (P * c.B).norm();
  r.lambda_Abar = c.lambda_Abar;
  return r;
}

namespace detail {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace detail

/// Frobenius-orthogonal projection onto the affine set of symmetric matrices
/// with the graph block pattern and A U = U (equivalently A P_U = P_U).
///
/// One unknown per free entry of the upper block triangle; off-diagonal
/// positions carry weight 2 in the norm. The constraint system is split into
/// connected components of its unknown/equation incidence graph and each
/// component keeps a complete orthogonal decomposition, so repeated
/// projections only cost back-substitutions. For U = V kron I_M the
/// components are the M(M+1)/2 entry pairs.
class AffineCombinerProjector {
 public:
  AffineCombinerProjector(const Subspace& subspace, const NetworkTopology& topology)
      : n_(topology.K * subspace.M) {
    const int M = subspace.M;
    const int K = topology.K;
    if (subspace.dim() != n_) {
      throw Error(ErrorKind::InvalidConfig, "subspace and topology disagree on K*M");
    }
    const MatrixXd& U = subspace.U;
    const int rank = subspace.rank();

    std::vector<int> index(static_cast<std::size_t>(n_) * n_, -1);
    auto at = [&](int r, int s) -> int& { return index[static_cast<std::size_t>(r) * n_ + s]; };
    for (int k = 0; k < K; ++k) {
      for (int l : topology.neighbors(k)) {
        if (l < k) continue;
        for (int a = 0; a < M; ++a) {
          for (int b = (l == k ? a : 0); b < M; ++b) {
            const int r = k * M + a;
            const int s = l * M + b;
            at(r, s) = at(s, r) = static_cast<int>(pos_r_.size());
            pos_r_.push_back(r);
            pos_s_.push_back(s);
            inv_sqrt_w_.push_back(r == s ? 1.0 : 1.0 / std::sqrt(2.0));
          }
        }
      }
    }
    const int n_unknowns = static_cast<int>(pos_r_.size());

    // Equations (A U)(r, c) = U(r, c) as (unknown, coefficient) lists.
    struct Equation {
      std::vector<std::pair<int, double>> terms;
      double rhs = 0.0;
    };
    std::vector<Equation> equations;
    detail::DisjointSets sets(n_unknowns);
    for (int r = 0; r < n_; ++r) {
      const int k = r / M;
      for (int c = 0; c < rank; ++c) {
        Equation eq;
        eq.rhs = U(r, c);
        for (int l : topology.neighbors(k)) {
          for (int b = 0; b < M; ++b) {
            const int s = l * M + b;
            if (U(s, c) != 0.0) eq.terms.emplace_back(at(r, s), U(s, c));
          }
        }
        if (eq.terms.empty()) {
          if (eq.rhs != 0.0) {
            throw Error(ErrorKind::InfeasibleConstraints,
                        "row " + std::to_string(r) + " cannot reproduce the subspace");
          }
          continue;
        }
        for (std::size_t t = 1; t < eq.terms.size(); ++t) sets.unite(eq.terms[0].first, eq.terms[t].first);
        equations.push_back(std::move(eq));
      }
    }

    std::vector<int> label(n_unknowns, -1);
    for (int x = 0; x < n_unknowns; ++x) {
      const int root = sets.find(x);
      if (label[root] < 0) {
        label[root] = static_cast<int>(components_.size());
        components_.emplace_back();
      }
      components_[label[root]].unknowns.push_back(x);
    }
    std::vector<std::vector<int>> comp_equations(components_.size());
    for (int e = 0; e < static_cast<int>(equations.size()); ++e) {
      comp_equations[label[sets.find(equations[e].terms[0].first)]].push_back(e);
    }

    std::vector<int> local(n_unknowns, -1);
    for (std::size_t ci = 0; ci < components_.size(); ++ci) {
      Component& comp = components_[ci];
      const auto& eqs = comp_equations[ci];
      if (eqs.empty()) continue;
      for (std::size_t j = 0; j < comp.unknowns.size(); ++j) local[comp.unknowns[j]] = static_cast<int>(j);
      comp.G = MatrixXd::Zero(static_cast<Eigen::Index>(eqs.size()),
                              static_cast<Eigen::Index>(comp.unknowns.size()));
      comp.rhs.resize(static_cast<Eigen::Index>(eqs.size()));
      for (std::size_t i = 0; i < eqs.size(); ++i) {
        const Equation& eq = equations[eqs[i]];
        for (const auto& [u, coef] : eq.terms) comp.G(static_cast<Eigen::Index>(i), local[u]) += coef;
        comp.rhs(static_cast<Eigen::Index>(i)) = eq.rhs;
      }
      MatrixXd scaled = comp.G;
      for (std::size_t j = 0; j < comp.unknowns.size(); ++j) {
        scaled.col(static_cast<Eigen::Index>(j)) *= inv_sqrt_w_[comp.unknowns[j]];
      }
      comp.cod.setThreshold(1e-12);
      comp.cod.compute(scaled);
      comp.scaled = std::move(scaled);
    }
  }

  int dim() const { return n_; }

  /// argmin |A - X|_F over the affine set, for symmetric X.
  MatrixXd project(const MatrixXd& X) const {
    const int n_unknowns = static_cast<int>(pos_r_.size());
    VectorXd x(n_unknowns);
    for (int id = 0; id < n_unknowns; ++id) {
      x(id) = 0.5 * (X(pos_r_[id], pos_s_[id]) + X(pos_s_[id], pos_r_[id]));
    }
    for (const Component& comp : components_) {
      if (comp.G.rows() == 0) continue;
      VectorXd t(static_cast<Eigen::Index>(comp.unknowns.size()));
      for (std::size_t j = 0; j < comp.unknowns.size(); ++j) t(static_cast<Eigen::Index>(j)) = x(comp.unknowns[j]);
      const VectorXd r = comp.rhs - comp.G * t;
      const VectorXd z = comp.cod.solve(r);
      const double residual = (comp.scaled * z - r).norm();
      if (residual > 1e-9 * std::max(1.0, r.norm())) {
        throw Error(ErrorKind::InfeasibleConstraints,
                    "A U = U has no solution on this topology (residual " + std::to_string(residual) + ")");
      }
      for (std::size_t j = 0; j < comp.unknowns.size(); ++j) {
        x(comp.unknowns[j]) += z(static_cast<Eigen::Index>(j)) * inv_sqrt_w_[comp.unknowns[j]];
      }
    }
    MatrixXd A = MatrixXd::Zero(n_, n_);
    for (int id = 0; id < n_unknowns; ++id) {
      A(pos_r_[id], pos_s_[id]) = x(id);
      A(pos_s_[id], pos_r_[id]) = x(id);
    }
    return A;
  }

  std::size_t component_count() const { return components_.size(); }

 private:
  struct Component {
    std::vector<int> unknowns;
    MatrixXd G;       // raw coefficients
    MatrixXd scaled;  // G W^{-1/2}
    VectorXd rhs;
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod;
  };

  int n_;
  std::vector<int> pos_r_, pos_s_;
  std::vector<double> inv_sqrt_w_;
  std::vector<Component> components_;
};

/// Minimizer of |A - P_U|_F over the affine set alone.
inline MatrixXd frobenius_nearest_combiner(const Subspace& subspace, const NetworkTopology& topology) {
  return AffineCombinerProjector(subspace, topology).project(subspace.projector);
}

struct CombinerOptions {
  /// Target band: rho(P_U - A) <= 1 - margin.
  double spectral_margin = 0.1;
  /// Smoothing parameters for the spectral-norm descent, each run for
  /// `descent_iterations` accelerated steps.
  std::vector<double> smoothing_schedule{20.0, 100.0, 500.0, 2000.0};
  int descent_iterations = 500;
};

/// Y kron I_M.
inline MatrixXd kron_identity(const MatrixXd& Y, int M) {
  MatrixXd out = MatrixXd::Zero(Y.rows() * M, Y.cols() * M);
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    for (Eigen::Index j = 0; j < Y.cols(); ++j) {
      for (int a = 0; a < M; ++a) out(i * M + a, j * M + a) = Y(i, j);
    }
  }
  return out;
}

/// If U = V kron I_M, returns V (K x P).
inline std::optional<MatrixXd> kronecker_factor(const Subspace& s) {
  const int M = s.M;
  const int K = s.agents();
  if (s.rank() % M != 0) return std::nullopt;
  const int P = s.rank() / M;
  MatrixXd V(K, P);
  for (int k = 0; k < K; ++k) {
    for (int p = 0; p < P; ++p) V(k, p) = s.U(k * M, p * M);
  }
  for (int k = 0; k < K; ++k) {
    for (int p = 0; p < P; ++p) {
      for (int a = 0; a < M; ++a) {
        for (int b = 0; b < M; ++b) {
          if (s.U(k * M + a, p * M + b) != (a == b ? V(k, p) : 0.0)) return std::nullopt;
        }
      }
    }
  }
  return V;
}

namespace detail {

/// Gradient of (1/beta) log sum_i 2 cosh(beta e_i) over the eigenvalues e_i
/// of the symmetric matrix X, a smooth upper bound on |X|_2 within log(2n)/beta.
inline MatrixXd smoothed_norm_gradient(const MatrixXd& X, double beta) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(X);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::EigenFailure, "symmetric eigensolver did not converge");
  }
  const VectorXd& e = es.eigenvalues();
  const double top = e.cwiseAbs().maxCoeff();
  VectorXd weight(e.size());
  double z = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double up = std::exp(beta * (e(i) - top));
    const double down = std::exp(beta * (-e(i) - top));
    weight(i) = up - down;
    z += up + down;
  }
  weight /= z;
  return es.eigenvectors() * weight.asDiagonal() * es.eigenvectors().transpose();
}

/// Accelerated projected gradient on the smoothed spectral norm of A - P_U,
/// restricted to the affine set, starting from `start`. Returns the iterate
/// with the smallest exact radius seen at the end of each smoothing stage.
inline MatrixXd minimize_spectral_radius(const AffineCombinerProjector& affine, const MatrixXd& P,
                                         const MatrixXd& start, const CombinerOptions& opt) {
  MatrixXd best = start;
  double best_rho = symmetric_spectral_radius(start - P);
  MatrixXd A = start;
  for (double beta : opt.smoothing_schedule) {
    MatrixXd y = A;
    MatrixXd prev = A;
    double t = 1.0;
    for (int it = 0; it < opt.descent_iterations; ++it) {
      const MatrixXd next = affine.project(y - smoothed_norm_gradient(y - P, beta) / beta);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = next + ((t - 1.0) / t_next) * (next - prev);
      prev = next;
      t = t_next;
    }
    A = prev;
    const double rho = symmetric_spectral_radius(A - P);
    if (rho < best_rho) {
      best_rho = rho;
      best = A;
    }
  }
  return best;
}

/// The Frobenius minimizer when it already lies in the band. Otherwise the
/// descent result, moved back toward the Frobenius minimizer along the
/// connecting segment as far as the band allows.
inline MatrixXd synthesize_dense(const Subspace& subspace, const NetworkTopology& topology,
                                 const CombinerOptions& opt) {
  const AffineCombinerProjector affine(subspace, topology);
  const MatrixXd& P = subspace.projector;
  const double bound = 1.0 - opt.spectral_margin;
  const MatrixXd frob = affine.project(P);
  if (symmetric_spectral_radius(frob - P) <= bound) return frob;

  const MatrixXd low = minimize_spectral_radius(affine, P, frob, opt);
  const double rho_low = symmetric_spectral_radius(low - P);
  if (!(rho_low < bound)) return low;

  // rho along the segment is convex in s, so bisect for the band crossing.
  const MatrixXd dir = frob - low;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 50; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (symmetric_spectral_radius(low + mid * dir - P) <= bound) lo = mid;
    else hi = mid;
  }
  return low + lo * dir;
}

}  // namespace detail

/// Symmetric A with the graph block pattern and A U = U, closest in
/// Frobenius norm to P_U among the candidates above, with rho(P_U - A) < 1.
///
/// For U = V kron I_M the whole construction commutes with conjugation by
/// I_K kron Q for orthogonal Q, so it is carried out for the scalar
/// subspace V at size K and lifted as Y kron I_M.
inline BlockCombiner build_combiner(const Subspace& subspace, const NetworkTopology& topology,
                                    const CombinerOptions& opt = {}) {
  if (subspace.dim() != topology.K * subspace.M) {
    throw Error(ErrorKind::InvalidConfig, "subspace and topology disagree on K*M");
  }
  if (!(opt.spectral_margin >= 0.0 && opt.spectral_margin < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "spectral_margin must lie in [0, 1)");
  }
  MatrixXd A;
  const auto V = subspace.M > 1 ? kronecker_factor(subspace) : std::nullopt;
  if (V) {
    const Subspace scalar = make_subspace(*V, 1);
    A = kron_identity(detail::synthesize_dense(scalar, topology, opt), subspace.M);
  } else {
    A = detail::synthesize_dense(subspace, topology, opt);
  }
  const MatrixXd& P = subspace.projector;
  const double lambda = symmetric_spectral_radius(P - A);
  if (!(lambda < 1.0 - 1e-9)) {
    throw Error(ErrorKind::SpectralViolation, "rho(P_U - A) = " + std::to_string(lambda) + " >= 1");
  }
  BlockCombiner c = assemble_combiner(A, subspace, topology);
  const CombinerReport report = verify_combiner(c, subspace, topology, 1e-8);
  if (!report.ap_ok() || !report.sparsity_ok()) {
    throw Error(ErrorKind::InfeasibleConstraints,
                "synthesized combiner violates A P_U = P_U (residual " +
                    std::to_string(report.ap_residual) + ")");
  }
  return c;
}

// ---------------------------------------------------------------------------
// JSON: {M, blocks: [[k, l, [M*M row-major entries]]]}

inline nlohmann::json combiner_to_json(const BlockCombiner& c) {
  nlohmann::json j;
  j["M"] = c.M;
  auto blocks = nlohmann::json::array();
  const BlockSparseMatrix& S = c.A_blocks;
  for (int k = 0; k < S.agents(); ++k) {
    for (int l : S.neighbors(k)) {
      const MatrixXd& b = S.block(k, l);
      std::vector<double> entries;
      entries.reserve(static_cast<std::size_t>(b.size()));
      for (Eigen::Index r = 0; r < b.rows(); ++r) {
        for (Eigen::Index s = 0; s < b.cols(); ++s) entries.push_back(b(r, s));
      }
      blocks.push_back({k, l, entries});
    }
  }
  j["blocks"] = std::move(blocks);
  return j;
}

/// Parses and validates; throws CombinerRejected if any property fails at tol.
inline BlockCombiner combiner_from_json(const nlohmann::json& j, const Subspace& subspace,
                                        const NetworkTopology& topology, double tol = 1e-8) {
  MatrixXd A;
  int M = 0;
  try {
    M = j.at("M").get<int>();
    if (M != subspace.M) throw Error(ErrorKind::CombinerRejected, "block size does not match subspace");
    const int n = topology.K * M;
    A = MatrixXd::Zero(n, n);
    for (const auto& blk : j.at("blocks")) {
      const int k = blk.at(0).get<int>();
      const int l = blk.at(1).get<int>();
      const auto e = blk.at(2).get<std::vector<double>>();
      if (k < 0 || l < 0 || k >= topology.K || l >= topology.K ||
          e.size() != static_cast<std::size_t>(M) * M) {
        throw Error(ErrorKind::CombinerRejected, "malformed block entry");
      }
      for (int r = 0; r < M; ++r) {
        for (int s = 0; s < M; ++s) A(k * M + r, l * M + s) = e[static_cast<std::size_t>(r) * M + s];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CombinerRejected, std::string("malformed combiner document: ") + e.what());
  }
  if ((A - A.transpose()).norm() > tol) {
    throw Error(ErrorKind::CombinerRejected, "imported combiner is not symmetric");
  }
  BlockCombiner c;
  try {
    c = assemble_combiner(A, subspace, topology);
  } catch (const Error& e) {
    throw Error(ErrorKind::CombinerRejected, e.what());
  }
  const CombinerReport r = verify_combiner(c, subspace, topology, tol);
  if (!r.all_ok()) throw Error(ErrorKind::CombinerRejected, "imported combiner fails validation");
  return c;
}

}  // namespace subdiff
