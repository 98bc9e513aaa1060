#include "seqkf/block.hpp"
#include "seqkf/testbench.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

using namespace seqkf;

TEST(Partition, ExactFit) {
  const Matrix m = Matrix::Random(4, 4);
  const auto b = partition<double>(m, 4);
  EXPECT_EQ(b.block_rows(), 1);
  EXPECT_EQ(b.block_cols(), 1);
  EXPECT_EQ(b.padded_data().size(), 16u);
}

TEST(Partition, PaddingIsZero) {
  const Matrix m = Matrix::Constant(6, 6, 3.0);
  const auto b = partition<double>(m, 4);
  EXPECT_EQ(b.block_rows(), 2);
  EXPECT_EQ(b.block_cols(), 2);
  EXPECT_EQ(b.padded_data().size(), 64u);
  double sum = 0;
  for (double v : b.padded_data()) sum += v;
  EXPECT_EQ(sum, 3.0 * 36);
}

TEST(Partition, RoundTripIsExact) {
  for (Index p : {1, 2, 3, 4, 8}) {
    const Matrix m = Matrix::Random(7, 5);
    EXPECT_EQ(unpartition(partition<double>(m, p)), m);
    const Vector v = Vector::Random(9);
    EXPECT_EQ(unpartition(partition_vector<double>(v, p)), v);
  }
  EXPECT_THROW(partition<double>(Matrix::Zero(2, 2), 0), ValidationError);
}

TEST(InnerProduct, OnesSumExactly) {
  EXPECT_EQ(inner_product_tree(Vector::Ones(5), Vector::Ones(5), 4, Precision::binary32), 5.0);
  EXPECT_EQ(inner_product_tree(Vector::Ones(5), Vector::Ones(5), 4, Precision::binary64), 5.0);
}

TEST(InnerProduct, Deterministic) {
  const Vector a = Vector::Random(37), b = Vector::Random(37);
  const double r1 = inner_product_tree(a, b, 4, Precision::binary32);
  const double r2 = inner_product_tree(a, b, 4, Precision::binary32);
  EXPECT_EQ(std::memcmp(&r1, &r2, sizeof r1), 0);
}

TEST(InnerProduct, TreeOrderShowsCancellation) {
  Vector a(4);
  a << 1e8, 1, -1e8, 1;
  const Vector b = Vector::Ones(4);
  double sequential = 0;
  for (Index i = 0; i < 4; ++i) sequential += a(i) * b(i);
  EXPECT_EQ(sequential, 2.0);
  const double tree = inner_product_tree(a, b, 4, Precision::binary32);
  // (1e8 + 1) and (-1e8 + 1) both round in binary32 before the final add
  EXPECT_NE(tree, sequential);
  EXPECT_EQ(tree, 0.0);
}

TEST(InnerProduct, MatchesDoubleOracle) {
  for (Index p : {1, 2, 3, 4, 8}) {
    const Vector a = Vector::Random(50), b = Vector::Random(50);
    EXPECT_NEAR(inner_product_tree(a, b, p, Precision::binary64), a.dot(b), 1e-13);
  }
}

TEST(Matvec, IdentityZeroAndDense) {
  const Vector v = Vector::Random(8);
  EXPECT_EQ(matvec_blocked(Matrix::Identity(8, 8), v, 4, Precision::binary64), v);
  EXPECT_EQ(matvec_blocked(Matrix::Zero(8, 8), v, 4, Precision::binary64), Vector::Zero(8));
  const Matrix m = Matrix::Random(8, 8);
  EXPECT_LT(relative_error(matvec_blocked(m, v, 4, Precision::binary64), Vector(m * v)), 1e-13);
  EXPECT_LT(relative_error(matvec_blocked(m, v, 4, Precision::binary32), Vector(m * v)), 1e-6);
}

TEST(Primitives, ElementWise) {
  auto a = partition_vector<double>(Vector::LinSpaced(5, 1, 5), 2);
  const auto b = partition_vector<double>(Vector::Ones(5), 2);
  add_in_place(a, b);
  EXPECT_EQ(unpartition(a), Vector::LinSpaced(5, 2, 6));
  add_in_place(a, b, true);
  EXPECT_EQ(unpartition(scale(a, 2.0)), Vector::LinSpaced(5, 2, 10));
  auto outer = outer_product(a, b);
  EXPECT_EQ(outer(4, 2), 5.0);
  subtract_in_place(outer, outer_product(a, b));
  EXPECT_TRUE(unpartition(outer).isZero(0));
}

TEST(BlockedFilter, UnblockedDoubleMatchesSequential) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = random_instance(8, 16, seed);
    FilterState post = inst.prior;
    post.phase = EstimatePhase::a_posteriori;
    const Vector q = Vector::Constant(8, 1e-6);
    const auto ref = sdkf_update(predict(post, q), inst.frame);
    const auto out = sdkf_step_blocked(post, inst.frame, q, 1, Precision::binary64);
    EXPECT_LT(relative_error(out.x, ref.x), 1e-12);
    EXPECT_LT(relative_error(out.p, ref.p), 1e-12);
  }
}

TEST(BlockedFilter, AnyParallelismMatchesSequential) {
  const auto inst = random_instance(9, 14, 21);
  FilterState post = inst.prior;
  post.phase = EstimatePhase::a_posteriori;
  const Vector q = Vector::Constant(9, 1e-6);
  const auto ref = sdkf_update(predict(post, q), inst.frame);
  for (Index p : {1, 2, 4, 8}) {
    const auto out = sdkf_step_blocked(post, inst.frame, q, p, Precision::binary64);
    EXPECT_LT(relative_error(out.x, ref.x), 1e-12) << p;
    const auto f32 = sdkf_step_blocked(post, inst.frame, q, p, Precision::binary32);
    EXPECT_LT(relative_error(f32.x, ref.x), 1e-4) << p;
  }
}

TEST(BlockedFilter, SinglePrecisionCloseToDouble) {
  // Well-conditioned instance: unit-scale prior, moderate measurement noise.
  const Index s = 8, d = 16;
  RandomStream rng(99);
  Matrix h(d, s);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < s; ++j) h(i, j) = rng.uniform(-1, 1);
  FilterState post;
  post.x = Vector::Zero(s);
  post.p = Matrix::Identity(s, s);
  Vector z(d);
  for (Index i = 0; i < d; ++i) z(i) = rng.uniform(-1, 1);
  const auto frame = MeasurementFrame::with_diagonal(z, h, Vector::Constant(d, 0.5));
  const Vector q = Vector::Constant(s, 1e-6);
  const auto ref = sdkf_step_blocked(post, frame, q, 4, Precision::binary64);
  const auto f32 = sdkf_step_blocked(post, frame, q, 4, Precision::binary32);
  for (Index i = 0; i < s; ++i) EXPECT_NEAR(f32.x(i), ref.x(i), 1e-5 * std::max(1.0, std::abs(ref.x(i))));
}

TEST(BlockedFilter, ScalarCaseExactInSinglePrecision) {
  FilterState post;
  post.x = Vector::Zero(1);
  post.p = Matrix::Constant(1, 1, 0.5);
  const auto frame = MeasurementFrame::with_diagonal(Vector::Ones(1), Matrix::Ones(1, 1), Vector::Ones(1));
  const auto out = sdkf_step_blocked(post, frame, Vector::Constant(1, 0.5), 4, Precision::binary32);
  EXPECT_EQ(out.x(0), 0.5);
  EXPECT_EQ(out.p(0, 0), 0.5);
}

TEST(BlockedFilter, RejectsBadInputs) {
  const auto inst = random_instance(3, 4, 2);
  EXPECT_THROW(sdkf_step_blocked(inst.prior, inst.frame, Vector::Constant(3, 1e-6), 2, Precision::binary32),
               ValidationError);
  BlockedSdkf<float> f(inst.frame.h, inst.frame.r.diagonal(), Vector::Constant(3, 1e-6), 2);
  EXPECT_THROW(f.step(Vector::Zero(3)), ValidationError);
}

TEST(CycleCost, SingleBlockSingleMeasurement) {
  const ArithConfig cfg;
  EXPECT_EQ(cfg.scalar_chain_latency(), 49);
  // 3 + 4 + 49 per measurement, B + add latency for the prediction
  EXPECT_EQ(cycle_cost(4, 1, 4).total_cycles, 3 + 4 + 49 + 1 + 5);
}

TEST(CycleCost, CubicGrowth) {
  auto ratio = [](long long s) {
    return static_cast<double>(cycle_cost(2 * s, 2 * s, 4).total_cycles) / static_cast<double>(cycle_cost(s, s, 4).total_cycles);
  };
  EXPECT_LT(ratio(1024), ratio(4096));
  EXPECT_NEAR(ratio(16384), 8.0, 0.005);
  const double mid = static_cast<double>(cycle_cost(256, 256, 4).total_cycles) /
                     static_cast<double>(cycle_cost(128, 128, 4).total_cycles);
  EXPECT_GE(mid, 6.0);
  EXPECT_LE(mid, 8.5);
}

TEST(CycleCost, FullParallelismIsLinearInD) {
  const auto c1 = cycle_cost(16, 10, 16).total_cycles, c2 = cycle_cost(16, 20, 16).total_cycles;
  const auto c3 = cycle_cost(16, 30, 16).total_cycles;
  EXPECT_EQ(c3 - c2, c2 - c1);
  EXPECT_THROW(cycle_cost(0, 1, 1), ValidationError);
}

TEST(CycleCost, ThroughputScalesBlockOps) {
  ArithConfig slow;
  slow.mul.throughput = 0.5;
  EXPECT_GT(cycle_cost(64, 64, 4, slow).total_cycles, cycle_cost(64, 64, 4).total_cycles);
  ArithConfig bad;
  bad.add.latency = 0;
  EXPECT_THROW(cycle_cost(4, 4, 4, bad), ValidationError);
}

TEST(Memory, WordCounts) {
  EXPECT_EQ(memory_footprint(1, 1, 1).words, 10);
  EXPECT_TRUE(memory_footprint(255, 255, 1).feasible);
  EXPECT_FALSE(memory_footprint(256, 256, 1).feasible);
  const double r = static_cast<double>(memory_footprint(2000, 2000, 1).words) /
                   static_cast<double>(memory_footprint(1000, 1000, 1).words);
  EXPECT_NEAR(r, 4.0, 0.01);
  EXPECT_EQ(memory_footprint(6, 6, 4).words, memory_footprint(8, 8, 4).words);
}

TEST(Resources, MonotoneAndQuadratic) {
  EXPECT_EQ(resource_estimate(1), 25);
  EXPECT_LT(resource_estimate(1), resource_estimate(2));
  EXPECT_LT(resource_estimate(2), resource_estimate(4));
  EXPECT_NEAR(static_cast<double>(resource_estimate(2048)) / static_cast<double>(resource_estimate(1024)), 4.0, 0.01);
}
