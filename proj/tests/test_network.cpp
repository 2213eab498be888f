#include "dsparse/network.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

using namespace dsparse;

TEST(Topology, SelfLoopsAndDegree) {
  const Topology p = Topology::path(3);
  EXPECT_EQ(p.degree(0), 2);
  EXPECT_EQ(p.degree(1), 3);
  EXPECT_TRUE(p.adjacent(1, 1));
  EXPECT_FALSE(p.adjacent(0, 2));
}

TEST(Topology, DisconnectedRejected) {
  const std::vector<Topology::Edge> e{{0, 1}};
  EXPECT_THROW(Topology(3, e), TopologyError);
  EXPECT_NO_THROW(Topology(3, e, Connectivity::kAllowDisconnected));
  EXPECT_THROW(Topology(2, std::vector<Topology::Edge>{{0, 5}}), TopologyError);
}

TEST(Topology, EdgeListFile) {
  const std::string path = testing::TempDir() + "edges.txt";
  {
    std::ofstream os(path);
    os << "# ring\n0 1\n1 2\n\n2 3\n3 0\n";
  }
  const Topology t = Topology::load_edge_list(path);
  EXPECT_EQ(t.size(), 4);
  EXPECT_TRUE(t.adjacent(3, 0));
  EXPECT_EQ(t.degree(2), 3);
  std::remove(path.c_str());
  EXPECT_THROW(Topology::load_edge_list(path), TopologyError);
}

TEST(Topology, GeometricIsConnectedAndSeeded) {
  Rng a(3), b(3);
  const Topology ta = Topology::random_geometric(20, 0.4, a);
  const Topology tb = Topology::random_geometric(20, 0.4, b);
  EXPECT_TRUE(ta.connected());
  EXPECT_EQ(ta.edges(), tb.edges());
}

TEST(Metropolis, PathGraph) {
  const Matrix w = build_metropolis(Topology::path(3)).weights();
  EXPECT_NEAR(w(1, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(w(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(w(2, 0), 0.0);
}

TEST(Metropolis, CompleteTwoAndSingle) {
  EXPECT_TRUE(build_metropolis(Topology::complete(2)).weights().isApprox(Matrix::Constant(2, 2, 0.5)));
  EXPECT_EQ(build_metropolis(Topology::complete(1)).weights()(0, 0), 1.0);
}

TEST(Uniform, Examples) {
  EXPECT_TRUE(build_uniform(Topology::complete(2)).weights().isApprox(Matrix::Constant(2, 2, 0.5)));
  const Matrix w = build_uniform(Topology::path(3)).weights();
  for (Index r = 0; r < 3; ++r) EXPECT_NEAR(w(r, 1), 1.0 / 3.0, 1e-15);
  const Matrix st = build_uniform(Topology::star(5)).weights();
  for (Index r = 0; r < 5; ++r) EXPECT_NEAR(st(r, 0), 0.2, 1e-15);
}

TEST(CombinationMatrix, Validation) {
  Matrix bad(2, 2);
  bad << 0.5, 0.6, 0.5, 0.4;
  EXPECT_NO_THROW(CombinationMatrix{bad});
  bad(0, 0) = 0.7;  // column no longer sums to one
  EXPECT_THROW(CombinationMatrix{bad}, std::invalid_argument);
  Matrix zero_diag(2, 2);
  zero_diag << 0.0, 0.5, 1.0, 0.5;
  EXPECT_THROW(CombinationMatrix{zero_diag}, std::invalid_argument);
  // weights outside the topology
  EXPECT_THROW(CombinationMatrix::averaging(3).check_support(Topology::path(3)), std::invalid_argument);
}

TEST(Consensus, MetropolisConnectedPasses) {
  const auto r = verify_consensus_conditions(build_metropolis(Topology::ring(6)));
  EXPECT_TRUE(r.column_sums_one);
  EXPECT_TRUE(r.row_sums_one);
  EXPECT_TRUE(r.spectral_below_one);
  EXPECT_LT(r.spectral_value, 1.0);
}

TEST(Consensus, IdentityDoesNotMix) {
  const auto r = verify_consensus_conditions(Matrix::Identity(2, 2));
  EXPECT_TRUE(r.column_sums_one);
  EXPECT_FALSE(r.spectral_below_one);
  EXPECT_NEAR(r.spectral_value, 1.0, 1e-12);
}

TEST(Consensus, AveragingIsOneStep) {
  const auto r = verify_consensus_conditions(Matrix::Constant(4, 4, 0.25));
  EXPECT_TRUE(r.ok());
  EXPECT_NEAR(r.spectral_value, 0.0, 1e-12);
}

TEST(Consensus, UniformOnIrregularGraphIsNotRowStochastic) {
  const auto r = verify_consensus_conditions(build_uniform(Topology::path(3)));
  EXPECT_TRUE(r.column_sums_one);
  EXPECT_FALSE(r.row_sums_one);
}

TEST(Combine, Examples) {
  const std::vector<double> v{2.0, 4.0};
  const auto out = synchronous_combine(v, build_uniform(Topology::complete(2)));
  EXPECT_DOUBLE_EQ(out[0], 3.0);
  EXPECT_DOUBLE_EQ(out[1], 3.0);

  const std::vector<Vector> x{Vector::Constant(2, 1.0), Vector::Constant(2, -4.0)};
  const auto same = synchronous_combine(x, CombinationMatrix::identity(2));
  EXPECT_EQ(same[0], x[0]);
  EXPECT_EQ(same[1], x[1]);

  const std::vector<double> s{3.0, 0.0, 3.0};
  EXPECT_NEAR(synchronous_combine(s, build_metropolis(Topology::path(3)))[1], 2.0, 1e-15);
}

TEST(Combine, ShapeMismatch) {
  const std::vector<Vector> x{Vector::Zero(2), Vector::Zero(3)};
  EXPECT_THROW(synchronous_combine(x, CombinationMatrix::identity(2)), DimensionError);
  const std::vector<double> y{1.0};
  EXPECT_THROW(synchronous_combine(y, CombinationMatrix::identity(2)), DimensionError);
}

TEST(RoundBuffer, ReadsOnlyDeliveredRound) {
  const CombinationMatrix w = build_metropolis(Topology::path(3));
  RoundBuffer<double> buf(3);
  for (Index k = 0; k < 3; ++k) buf.post(k, 3.0 * static_cast<double>(k != 1));
  buf.deliver();
  // posts after the barrier do not leak into this round
  buf.post(0, 100.0);
  EXPECT_NEAR(buf.combine_for(1, w), 2.0, 1e-15);
  EXPECT_EQ(buf.received(0), 3.0);
}
