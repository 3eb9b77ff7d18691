#include <gtest/gtest.h>

#include <cmath>

#include "circuits.hpp"
#include "moncirc/architectures.hpp"
#include "moncirc/error.hpp"
#include "moncirc/inference.hpp"
#include "oracles.hpp"

using namespace moncirc;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

CircuitGraph leaf_pair_product(std::size_t var_a, std::size_t var_b) {
  std::vector<Block> blocks{Block::leaf(var_a, 1, 0), Block::leaf(var_b, 1, 1), Block::hadamard({0, 1}, 1)};
  return CircuitGraph(std::move(blocks), 2, {LeafTable::uniform(1, 2), LeafTable::uniform(1, 2)}, {}, true);
}

}  // namespace

TEST(Circuit, ZooValidates) {
  for (const auto& [name, g] : fixtures::small_zoo(3)) {
    const auto report = validate(g);
    EXPECT_TRUE(report.ok()) << name << ": " << report.to_string();
  }
}

TEST(Circuit, ScopesAreUnionsOfChildren) {
  const auto g = build_hmm({4, 2, 3, SumSpec::dense(), true});
  EXPECT_EQ(g.scope(g.root()), (VariableScope{0, 1, 2, 3}));
  EXPECT_EQ(g.num_variables(), 4u);
  EXPECT_EQ(g.vocab(2), 3u);
  for (BlockId id = 0; id < g.num_blocks(); ++id) {
    const Block& b = g.block(id);
    if (b.kind == BlockKind::Leaf) EXPECT_EQ(g.scope(id), (VariableScope{static_cast<std::uint32_t>(b.variable)}));
  }
}

TEST(Circuit, DetectsDecomposabilityViolation) {
  const auto report = validate(leaf_pair_product(0, 0));
  EXPECT_TRUE(report.has(ViolationKind::Decomposability));
  EXPECT_TRUE(validate(leaf_pair_product(0, 1)).ok());
}

TEST(Circuit, DetectsSmoothnessViolation) {
  std::vector<Block> blocks{Block::leaf(0, 1, 0), Block::leaf(1, 1, 1), Block::sum({0, 1}, 1, 0)};
  CircuitGraph g(std::move(blocks), 2, {LeafTable::uniform(1, 2), LeafTable::uniform(1, 2)},
                 {DenseWeights{Eigen::MatrixXd::Constant(1, 2, 0.5)}}, true);
  EXPECT_TRUE(validate(g).has(ViolationKind::Smoothness));
}

TEST(Circuit, DetectsDimensionViolations) {
  std::vector<Block> blocks{Block::leaf(0, 2, 0), Block::sum({0}, 1, 0)};
  CircuitGraph g(blocks, 1, {LeafTable::uniform(2, 3)}, {DenseWeights{Eigen::MatrixXd::Constant(1, 3, 1.0 / 3)}},
                 true);
  EXPECT_TRUE(validate(g).has(ViolationKind::Dimension));

  std::vector<Block> had{Block::leaf(0, 2, 0), Block::leaf(1, 3, 1), Block::hadamard({0, 1}, 2),
                         Block::sum({2}, 1, 0)};
  CircuitGraph h(had, 3, {LeafTable::uniform(2, 2), LeafTable::uniform(3, 2)},
                 {DenseWeights{Eigen::MatrixXd::Constant(1, 2, 0.5)}}, true);
  EXPECT_TRUE(validate(h).has(ViolationKind::Dimension));
}

TEST(Circuit, DetectsNormalizationViolation) {
  auto g = fixtures::two_leaf_mixture(0.7, 0.7, {0.5, 0.5}, {0.5, 0.5});
  EXPECT_TRUE(validate(g).has(ViolationKind::Normalization));
  g.set_normalized(false);
  EXPECT_TRUE(validate(g).ok());
}

TEST(Circuit, RootMustBeSingleNode) {
  std::vector<Block> blocks{Block::leaf(0, 2, 0)};
  CircuitGraph g(blocks, 0, {LeafTable::uniform(2, 2)}, {}, true);
  EXPECT_TRUE(validate(g).has(ViolationKind::Structure));
}

TEST(Circuit, StructuralErrorsAreContract) {
  EXPECT_EQ(kind_of([] { CircuitGraph({}, 0, {}, {}, true); }), ErrorKind::Contract);
  EXPECT_EQ(kind_of([] { CircuitGraph({Block::leaf(0, 1, 0)}, 3, {LeafTable::uniform(1, 2)}, {}, true); }),
            ErrorKind::Contract);
  EXPECT_EQ(kind_of([] { CircuitGraph({Block::leaf(0, 1, 2)}, 0, {LeafTable::uniform(1, 2)}, {}, true); }),
            ErrorKind::Contract);
  EXPECT_EQ(kind_of([] {
              CircuitGraph({Block::sum({1}, 1, 0), Block::leaf(0, 1, 0)}, 0, {LeafTable::uniform(1, 2)},
                           {DenseWeights{Eigen::MatrixXd::Ones(1, 1)}}, true);
            }),
            ErrorKind::Contract);
}

TEST(Circuit, ReorderPreservesEveryLikelihood) {
  const auto g = build_hclt(ChowLiuTree{4, 0, {-1, 0, 0, 1}, {0, 0, 0, 0}}, 3, 3, SumSpec::dense(), 5);
  // Leaves of the four variables first, then every inner block in the original order.
  std::vector<BlockId> order;
  for (BlockId id = 0; id < g.num_blocks(); ++id) {
    if (g.block(id).kind == BlockKind::Leaf) order.push_back(id);
  }
  for (BlockId id = 0; id < g.num_blocks(); ++id) {
    if (g.block(id).kind != BlockKind::Leaf) order.push_back(id);
  }
  const auto r = reorder_blocks(g, order);
  EXPECT_TRUE(validate(r).ok());
  EXPECT_EQ(r.block(r.root()).size, 1u);
  oracle::for_each_assignment(4, 3, [&](std::span<const std::int32_t> x) {
    EXPECT_NEAR(evaluate_log(r, x), evaluate_log(g, x), 1e-12);
  });
}

TEST(Circuit, ReorderRejectsNonTopologicalOrders) {
  const auto g = fixtures::two_leaf_mixture(0.5, 0.5, {0.5, 0.5}, {0.5, 0.5});
  const std::vector<BlockId> bad{2, 0, 1};
  EXPECT_EQ(kind_of([&] { reorder_blocks(g, bad); }), ErrorKind::Contract);
  const std::vector<BlockId> dup{0, 0, 2};
  EXPECT_EQ(kind_of([&] { reorder_blocks(g, dup); }), ErrorKind::Contract);
}

TEST(Circuit, CopiesShareTopologyButNotParameters) {
  auto a = build_hmm({3, 2, 2, SumSpec::dense(), true}, 1);
  auto b = a;
  EXPECT_EQ(a.topology(), b.topology());
  b.leaf_tables()[0].at(0, 0) = 0.123;
  EXPECT_NE(a.leaf_tables()[0].at(0, 0), 0.123);
}

TEST(Circuit, RandomizedParametersAreNormalizedAndSeeded) {
  auto a = build_hmm({3, 4, 3, SumSpec::monarch(plan_schedule(4, 2)), true});
  auto b = a;
  randomize_parameters(a, 9);
  randomize_parameters(b, 9);
  EXPECT_TRUE(validate(a).ok());
  EXPECT_EQ(a.leaf_tables(), b.leaf_tables());
  EXPECT_TRUE(a.sum_params() == b.sum_params());
  randomize_parameters(b, 10);
  EXPECT_NE(a.leaf_tables(), b.leaf_tables());
}

TEST(Circuit, CostAccounting) {
  const auto dense = build_hmm({5, 16, 3, SumSpec::dense(), true});
  EXPECT_EQ(hidden_flops(dense), 256u);
  EXPECT_EQ(leaf_flops(dense), 16u);
  EXPECT_EQ(parameter_count(dense), 16u * 3 + 256 + 16);
  const auto mon = build_hmm({5, 16, 3, SumSpec::monarch(plan_schedule(16, 2)), true});
  EXPECT_EQ(hidden_flops(mon), 128u);
  EXPECT_EQ(parameter_count(mon), 16u * 3 + 128 + 16);
}

TEST(Circuit, ParamHelpers) {
  const SumParam id = IdentityMap{4};
  EXPECT_EQ(param_inputs(id), 4u);
  EXPECT_EQ(param_outputs(id), 4u);
  EXPECT_EQ(param_count(id), 0u);
  EXPECT_EQ(param_flops(id), 0u);
  EXPECT_TRUE(param_row_stochastic(id, 0.0));
  const SumParam d = DenseWeights{Eigen::MatrixXd::Constant(2, 3, 1.0 / 3)};
  EXPECT_EQ(param_flops(d), 6u);
  EXPECT_TRUE(param_row_stochastic(d, 1e-12));
  EXPECT_EQ(param_kind(d), "dense");
}
