#pragma once

// Random geometric networks, their graph Fourier transform, and the
// bandlimited subspace constraint built from it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "subdiff/errors.hpp"
#include "subdiff/rng.hpp"

namespace subdiff {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Undirected graph over K agents. Neighborhoods are sorted and always
/// contain the agent itself.
struct NetworkTopology {
  int K = 0;
  std::vector<Eigen::Vector2d> coords;
  std::vector<std::vector<int>> neighborhoods;
  MatrixXd weights;  // C, symmetric, zero outside neighborhoods

  std::span<const int> neighbors(int k) const { return neighborhoods[k]; }

  bool is_neighbor(int k, int l) const {
    const auto& n = neighborhoods[k];
    return std::binary_search(n.begin(), n.end(), l);
  }

  int edge_count() const {
    int e = 0;
    for (const auto& n : neighborhoods) e += static_cast<int>(n.size()) - 1;
    return e / 2;
  }
};

struct SpectralDecomposition {
  MatrixXd laplacian;
  MatrixXd eigvecs;  // columns, sorted by ascending eigenvalue
  VectorXd eigvals;
};

/// Constraint subspace R(U) with its orthogonal projector.
struct Subspace {
  MatrixXd U;  // KM x P~
  int M = 1;
  MatrixXd projector;

  int agents() const { return static_cast<int>(U.rows()) / M; }
  int dim() const { return static_cast<int>(U.rows()); }
  int rank() const { return static_cast<int>(U.cols()); }
};

namespace detail {

inline bool is_connected(const std::vector<std::vector<int>>& nbhd) {
  const int K = static_cast<int>(nbhd.size());
  if (K == 0) return false;
  std::vector<char> seen(K, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const int k = q.front();
    q.pop();
    for (int l : nbhd[k]) {
      if (!seen[l]) {
        seen[l] = 1;
        ++count;
        q.push(l);
      }
    }
  }
  return count == K;
}

}  // namespace detail

/// Build a topology from explicit coordinates (may be empty) and a symmetric
/// weight matrix; neighborhoods follow the nonzero pattern of C.
inline NetworkTopology topology_from_weights(MatrixXd C,
                                             std::vector<Eigen::Vector2d> coords = {}) {
  NetworkTopology t;
  t.K = static_cast<int>(C.rows());
  t.coords = std::move(coords);
  C.diagonal().setZero();
  t.weights = std::move(C);
  t.neighborhoods.resize(t.K);
  for (int k = 0; k < t.K; ++k) {
    for (int l = 0; l < t.K; ++l) {
      if (l == k || t.weights(l, k) != 0.0) t.neighborhoods[k].push_back(l);
    }
  }
  return t;
}

/// Agents uniform in the unit square; l and k are linked when their distance
/// is at most `radius`, with weight exp(-d^2 / (2 kernel_width^2)).
inline NetworkTopology generate_geometric_graph(int K, std::uint64_t seed,
                                                double kernel_width,
                                                double radius) {
  if (K < 2) throw Error(ErrorKind::InvalidConfig, "need at least 2 agents");
  if (!(kernel_width > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "kernel_width must be positive");
  }
  if (radius < 0.0) throw Error(ErrorKind::InvalidConfig, "negative radius");

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Eigen::Vector2d> coords(K);
  for (auto& p : coords) {
    const double x = unif(rng);
    const double y = unif(rng);
    p = {x, y};
  }

  MatrixXd C = MatrixXd::Zero(K, K);
  for (int k = 0; k < K; ++k) {
    for (int l = k + 1; l < K; ++l) {
      const double d = (coords[k] - coords[l]).norm();
      if (radius > 0.0 && d <= radius) {
        const double c = std::exp(-d * d / (2.0 * kernel_width * kernel_width));
        C(k, l) = c;
        C(l, k) = c;
      }
    }
  }
  NetworkTopology t = topology_from_weights(std::move(C), std::move(coords));
  if (!detail::is_connected(t.neighborhoods)) {
    throw Error(ErrorKind::GraphDisconnected,
                "geometric graph with K=" + std::to_string(K) +
                    ", seed=" + std::to_string(seed) +
                    ", radius=" + std::to_string(radius) + " is not connected");
  }
  return t;
}

/// Retries generate_geometric_graph with seeds seed, seed+1, ... until a
/// connected graph appears. `used_seed` receives the accepted seed.
inline NetworkTopology generate_connected_geometric_graph(
    int K, std::uint64_t seed, double kernel_width, double radius,
    int max_attempts = 100, std::uint64_t* used_seed = nullptr) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    try {
      auto t = generate_geometric_graph(K, seed + attempt, kernel_width, radius);
      if (used_seed) *used_seed = seed + attempt;
      return t;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::GraphDisconnected) throw;
    }
  }
  throw Error(ErrorKind::GraphDisconnected,
              "no connected graph after " + std::to_string(max_attempts) +
                  " attempts; increase the radius");
}

/// Flip each column so its largest-magnitude entry is positive (first such
/// entry on ties).
inline void normalize_signs(MatrixXd& V) {
  for (Eigen::Index j = 0; j < V.cols(); ++j) {
    Eigen::Index imax = 0;
    V.col(j).cwiseAbs().maxCoeff(&imax);
    if (V(imax, j) < 0.0) V.col(j) *= -1.0;
  }
}

inline SpectralDecomposition spectral(const NetworkTopology& topology) {
  SpectralDecomposition s;
  const MatrixXd& C = topology.weights;
  s.laplacian = MatrixXd(C.rowwise().sum().asDiagonal()) - C;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s.laplacian);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::EigenFailure, "Laplacian eigensolver did not converge");
  }
  // Eigen returns eigenvalues in ascending order.
  s.eigvals = es.eigenvalues();
  s.eigvecs = es.eigenvectors();
  normalize_signs(s.eigvecs);
  return s;
}

/// Wrap an arbitrary full-column-rank basis; throws RankDeficient otherwise.
inline Subspace make_subspace(MatrixXd U, int M) {
  if (M < 1 || U.rows() % M != 0) {
    throw Error(ErrorKind::InvalidConfig, "basis rows not a multiple of M");
  }
  Eigen::JacobiSVD<MatrixXd> svd(U);
  const VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) <= 1e-10 * sv(0)) {
    throw Error(ErrorKind::RankDeficient, "subspace basis is rank deficient");
  }
  Subspace s;
  s.M = M;
  const MatrixXd gram = U.transpose() * U;
  s.projector = U * gram.ldlt().solve(U.transpose());
  s.projector = 0.5 * (s.projector + s.projector.transpose()).eval();
  s.U = std::move(U);
  return s;
}

/// U = V_P kron I_M, with V_P the P smoothest Laplacian eigenvectors.
/// Stacked index convention: agent k, coordinate a -> row k*M + a.
inline Subspace build_subspace(const SpectralDecomposition& spec, int P, int M) {
  const int K = static_cast<int>(spec.eigvecs.rows());
  if (P < 1 || P > K) {
    throw Error(ErrorKind::InvalidConfig, "P must lie in [1, K]");
  }
  if (M < 1) throw Error(ErrorKind::InvalidConfig, "M must be positive");
  MatrixXd U = MatrixXd::Zero(K * M, P * M);
  for (int k = 0; k < K; ++k) {
    for (int p = 0; p < P; ++p) {
      for (int a = 0; a < M; ++a) U(k * M + a, p * M + a) = spec.eigvecs(k, p);
    }
  }
  return make_subspace(std::move(U), M);
}

/// Standard normal signal, K x M, drawn coordinate by coordinate.
inline MatrixXd draw_signal(int K, int M, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd Z(K, M);
  for (int j = 0; j < M; ++j) {
    for (int k = 0; k < K; ++k) Z(k, j) = normal(rng);
  }
  return Z;
}

inline VectorXd stack_agents(const MatrixXd& W) {
  // Row-major flattening of K x M gives col{w_k}.
  VectorXd out(W.size());
  for (Eigen::Index k = 0; k < W.rows(); ++k) out.segment(k * W.cols(), W.cols()) = W.row(k).transpose();
  return out;
}

/// Heat-kernel smoothing exp(-tau L) of a random signal, stacked as col{w_k^o}.
inline VectorXd smooth_targets(const SpectralDecomposition& spec, int M,
                               double tau, std::uint64_t seed) {
  if (tau < 0.0) throw Error(ErrorKind::InvalidConfig, "tau must be >= 0");
  const int K = static_cast<int>(spec.eigvecs.rows());
  const MatrixXd Z = draw_signal(K, M, seed);
  const VectorXd gains = (-tau * spec.eigvals.array()).exp();
  const MatrixXd& V = spec.eigvecs;
  const MatrixXd W = V * (gains.asDiagonal() * (V.transpose() * Z));
  return stack_agents(W);
}

/// Dirichlet energy w^T (L kron I_M) w of a stacked signal.
inline double dirichlet_energy(const MatrixXd& L, const VectorXd& w, int M) {
  const int K = static_cast<int>(L.rows());
  double e = 0.0;
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < K; ++l) {
      if (L(k, l) != 0.0) e += L(k, l) * w.segment(k * M, M).dot(w.segment(l * M, M));
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// JSON replay document: {K, M, P, coords, edges, U (column-major), w_o}.

inline nlohmann::json network_to_json(const NetworkTopology& t, const Subspace& s,
                                      const VectorXd& w_o) {
  nlohmann::json j;
  j["K"] = t.K;
  j["M"] = s.M;
  j["P"] = s.rank() / s.M;
  auto coords = nlohmann::json::array();
  for (const auto& p : t.coords) coords.push_back({p.x(), p.y()});
  j["coords"] = std::move(coords);
  auto edges = nlohmann::json::array();
  for (int k = 0; k < t.K; ++k) {
    for (int l : t.neighbors(k)) {
      if (l > k) edges.push_back({k, l, t.weights(k, l)});
    }
  }
  j["edges"] = std::move(edges);
  j["U"] = std::vector<double>(s.U.data(), s.U.data() + s.U.size());
  j["w_o"] = std::vector<double>(w_o.data(), w_o.data() + w_o.size());
  return j;
}

struct NetworkDocument {
  NetworkTopology topology;
  Subspace subspace;
  VectorXd w_o;
};

inline NetworkDocument network_from_json(const nlohmann::json& j) {
  try {
    const int K = j.at("K").get<int>();
    const int M = j.at("M").get<int>();
    const int P = j.at("P").get<int>();
    std::vector<Eigen::Vector2d> coords;
    for (const auto& c : j.at("coords")) coords.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
    MatrixXd C = MatrixXd::Zero(K, K);
    for (const auto& e : j.at("edges")) {
      const int k = e.at(0).get<int>();
      const int l = e.at(1).get<int>();
      const double c = e.at(2).get<double>();
      if (k < 0 || l < 0 || k >= K || l >= K) throw Error(ErrorKind::InvalidConfig, "edge index out of range");
      C(k, l) = c;
      C(l, k) = c;
    }
    const auto u = j.at("U").get<std::vector<double>>();
    if (u.size() != static_cast<std::size_t>(K) * M * P * M) {
      throw Error(ErrorKind::InvalidConfig, "U has wrong size");
    }
    MatrixXd U = Eigen::Map<const MatrixXd>(u.data(), K * M, P * M);
    const auto w = j.at("w_o").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(K) * M) throw Error(ErrorKind::InvalidConfig, "w_o has wrong size");
    NetworkDocument doc{topology_from_weights(std::move(C), std::move(coords)),
                        make_subspace(std::move(U), M),
                        Eigen::Map<const VectorXd>(w.data(), K * M)};
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("malformed network document: ") + e.what());
  }
}

}  // namespace subdiff
