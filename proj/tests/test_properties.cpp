#include "properties.hpp"

#include <gtest/gtest.h>

using namespace dsparse;
using namespace dsparse::props;

namespace {

void expect_ok(const PropertyResult& r) {
  EXPECT_GE(r.cases, 1000) << r.name;
  EXPECT_TRUE(r.ok()) << r.name << ": " << r.failures << " failures, first: " << r.first_failure;
}

}  // namespace

TEST(Properties, HardThreshold) { expect_ok(hard_threshold_property()); }
TEST(Properties, RestrictedLeastSquares) { expect_ok(restricted_ls_property()); }
TEST(Properties, RipMonotone) { expect_ok(rip_monotone_property()); }
TEST(Properties, CombinationMatrix) { expect_ok(combination_matrix_property()); }
TEST(Properties, ConsensusDecay) { expect_ok(consensus_decay_property()); }
TEST(Properties, PruningBound) { expect_ok(pruning_bound_property()); }
TEST(Properties, GreediState) { expect_ok(greedi_state_property()); }
TEST(Properties, Determinism) { expect_ok(determinism_property()); }
