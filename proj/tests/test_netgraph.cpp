#include <gtest/gtest.h>

#include <set>

#include "subdiff/netgraph.hpp"

using namespace subdiff;

namespace {

// Reference connectivity by depth-first search on the weight matrix alone.
bool connected_by_dfs(const MatrixXd& C) {
  const int K = static_cast<int>(C.rows());
  std::vector<int> stack{0};
  std::set<int> seen{0};
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    for (int l = 0; l < K; ++l) {
      if (C(k, l) != 0.0 && seen.insert(l).second) stack.push_back(l);
    }
  }
  return static_cast<int>(seen.size()) == K;
}

}  // namespace

TEST(Netgraph, TwoAgentsWithinRadius) {
  // Radius 2 exceeds the square's diagonal, so the pair is always linked.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto t = generate_geometric_graph(2, seed, 0.3, 2.0);
    const double d = (t.coords[0] - t.coords[1]).norm();
    EXPECT_NEAR(t.weights(0, 1), std::exp(-d * d / (2 * 0.09)), 1e-15);
    EXPECT_EQ(t.weights(0, 1), t.weights(1, 0));
    EXPECT_TRUE(t.is_neighbor(0, 1));
    EXPECT_EQ(t.edge_count(), 1);
  }
}

TEST(Netgraph, ZeroRadiusIsDisconnected) {
  try {
    generate_geometric_graph(10, 3, 0.2, 0.0);
    FAIL() << "expected GraphDisconnected";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GraphDisconnected);
  }
}

TEST(Netgraph, SingleAgentRejected) {
  try {
    generate_geometric_graph(1, 3, 0.2, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(Netgraph, GeneratedGraphsMatchReferenceConnectivity) {
  int rejected = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    try {
      const auto t = generate_geometric_graph(30, seed, 0.1, 0.22);
      EXPECT_TRUE(connected_by_dfs(t.weights)) << "seed " << seed;
    } catch (const Error& e) {
      ASSERT_EQ(e.kind(), ErrorKind::GraphDisconnected);
      ++rejected;
    }
  }
  // At this radius both outcomes occur, so the check is not vacuous.
  EXPECT_GT(rejected, 0);
  EXPECT_LT(rejected, 40);
}

TEST(Netgraph, WeightsSymmetricAndLaplacianAnnihilatesOnes) {
  std::uint64_t used = 0;
  const auto t = generate_connected_geometric_graph(50, 1, 0.2, 0.45, 100, &used);
  EXPECT_GE(used, 1u);
  EXPECT_EQ((t.weights - t.weights.transpose()).cwiseAbs().maxCoeff(), 0.0);
  const auto s = spectral(t);
  EXPECT_LE((s.laplacian * VectorXd::Ones(50)).cwiseAbs().maxCoeff(), 1e-12);
  for (int k = 0; k < 50; ++k) {
    for (int l = 0; l < 50; ++l) {
      if (k != l && !t.is_neighbor(k, l)) EXPECT_EQ(t.weights(k, l), 0.0);
    }
  }
}

TEST(Netgraph, SpectralDecompositionReconstructsLaplacian) {
  const auto t = generate_connected_geometric_graph(50, 7, 0.2, 0.45);
  const auto s = spectral(t);
  const MatrixXd L = s.eigvecs * s.eigvals.asDiagonal() * s.eigvecs.transpose();
  EXPECT_LE((L - s.laplacian).norm(), 1e-10 * s.laplacian.norm());
  EXPECT_NEAR(s.eigvals.sum(), s.laplacian.trace(), 1e-10 * s.laplacian.trace());
  EXPECT_NEAR(s.eigvals(0), 0.0, 1e-10);
  EXPECT_GT(s.eigvals(1), 1e-8);  // connected
  for (int i = 1; i < s.eigvals.size(); ++i) EXPECT_LE(s.eigvals(i - 1), s.eigvals(i));
  for (int j = 0; j < s.eigvecs.cols(); ++j) {
    Eigen::Index imax = 0;
    s.eigvecs.col(j).cwiseAbs().maxCoeff(&imax);
    EXPECT_GT(s.eigvecs(imax, j), 0.0);
  }
}

TEST(Netgraph, ProjectorIdempotentAndSymmetric) {
  const auto t = generate_connected_geometric_graph(50, 2, 0.2, 0.45);
  const auto s = spectral(t);
  for (int P : {1, 3, 50}) {
    const Subspace u = build_subspace(s, P, 5);
    EXPECT_EQ(u.rank(), 5 * P);
    EXPECT_LE((u.projector * u.projector - u.projector).norm(), 1e-10);
    EXPECT_LE((u.projector - u.projector.transpose()).norm(), 1e-10);
    EXPECT_NEAR(u.projector.trace(), 5.0 * P, 1e-9);
  }
  const Subspace full = build_subspace(s, 50, 2);
  EXPECT_LE((full.projector - MatrixXd::Identity(100, 100)).norm(), 1e-10);
}

TEST(Netgraph, KroneckerLayout) {
  const auto t = generate_connected_geometric_graph(20, 4, 0.2, 0.6);
  const auto s = spectral(t);
  const Subspace u = build_subspace(s, 3, 4);
  for (int k = 0; k < 20; ++k) {
    for (int p = 0; p < 3; ++p) {
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          EXPECT_EQ(u.U(k * 4 + a, p * 4 + b), a == b ? s.eigvecs(k, p) : 0.0);
        }
      }
    }
  }
}

TEST(Netgraph, ConsensusSubspaceMakesBlocksEqual) {
  const auto t = generate_connected_geometric_graph(30, 5, 0.2, 0.5);
  const Subspace u = build_subspace(spectral(t), 1, 3);
  Rng rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    VectorXd w(90);
    for (auto& x : w) x = n(rng);
    const VectorXd pw = u.projector * w;
    for (int k = 1; k < 30; ++k) {
      EXPECT_LE((pw.segment(k * 3, 3) - pw.segment(0, 3)).cwiseAbs().maxCoeff(), 1e-10);
    }
    // The block value is the network average.
    VectorXd avg = VectorXd::Zero(3);
    for (int k = 0; k < 30; ++k) avg += w.segment(k * 3, 3) / 30.0;
    EXPECT_LE((pw.segment(0, 3) - avg).norm(), 1e-10);
  }
}

TEST(Netgraph, RankDeficientBasisRejected) {
  MatrixXd U(6, 2);
  U.col(0) = VectorXd::Ones(6);
  U.col(1) = 2.0 * VectorXd::Ones(6);
  try {
    make_subspace(U, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficient);
  }
}

TEST(Netgraph, SmoothingLowersDirichletEnergy) {
  const auto t = generate_connected_geometric_graph(50, 1, 0.2, 0.45);
  const auto s = spectral(t);
  for (double tau : {0.5, 1.0, 5.0}) {
    const VectorXd raw = stack_agents(draw_signal(50, 5, 99));
    const VectorXd smooth = smooth_targets(s, 5, tau, 99);
    EXPECT_LT(dirichlet_energy(s.laplacian, smooth, 5), dirichlet_energy(s.laplacian, raw, 5));
  }
  const VectorXd same = smooth_targets(s, 5, 0.0, 99);
  EXPECT_LE((same - stack_agents(draw_signal(50, 5, 99))).norm(), 1e-10);
}

TEST(Netgraph, JsonRoundTrip) {
  const auto t = generate_connected_geometric_graph(12, 3, 0.2, 0.6);
  const auto s = spectral(t);
  const Subspace u = build_subspace(s, 2, 3);
  const VectorXd w = smooth_targets(s, 3, 1.0, 5);
  const auto doc = network_from_json(nlohmann::json::parse(network_to_json(t, u, w).dump()));
  EXPECT_EQ(doc.topology.K, 12);
  EXPECT_EQ(doc.topology.neighborhoods, t.neighborhoods);
  EXPECT_EQ((doc.topology.weights - t.weights).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((doc.subspace.U - u.U).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((doc.w_o - w).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(doc.topology.coords.size(), 12u);
}
