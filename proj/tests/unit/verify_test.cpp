// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "a2fpn/verify.hpp"

namespace a2fpn {
namespace {

TEST(RelativeError, UsesLargerMagnitudeWithFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.5), 0.5 / 1.5);
  EXPECT_DOUBLE_EQ(relative_error(-2.0, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-12, 0.0), 1e-12 / 1e-8);
}

TEST(FiniteDiff, CentralDifferencesOfCubic) {
  const Tensor<double> x({3}, std::vector<double>{0.5, -1.0, 2.0});
  const auto g = finite_diff_grad(
      [](const Tensor<double>& t) {
        double s = 0;
        for (double v : t.data()) s += v * v * v;
        return s;
      },
      x, 1e-4);
  for (std::size_t i = 0; i < 3; ++i) {
    // Central differences of v^3 carry an exact eps^2 term.
    EXPECT_NEAR(g[i], 3 * x[i] * x[i] + 1e-8, 1e-9);
  }
}

TEST(GradCheck, RegistryListsPrimitivesFirst) {
  const auto& ops = gradcheck_ops();
  ASSERT_FALSE(ops.empty());
  bool seen_composite = false;
  for (const auto& op : ops) {
    if (!is_primitive_op(op)) {
      seen_composite = true;
    } else {
      EXPECT_FALSE(seen_composite) << op;
    }
  }
  EXPECT_TRUE(seen_composite);
}

TEST(GradCheck, UnknownOpThrows) {
  EXPECT_THROW(check_gradients("not_an_op"), std::invalid_argument);
}

TEST(GradCheck, PrimitivesPass) {
  for (const auto& op : gradcheck_ops()) {
    if (!is_primitive_op(op)) continue;
    const auto r = check_gradients(op);
    EXPECT_TRUE(r.pass) << op << " " << r.max_rel_err << " at " << r.worst << r.error;
    EXPECT_EQ(r.tol, kPrimitiveTolerance);
    EXPECT_GT(r.coordinates, 0u);
    EXPECT_LE(10 * r.kinks, r.coordinates + r.kinks) << op;
  }
}

TEST(GradCheck, ZeroToleranceFails) {
  GradCheckOptions opt;
  opt.tol = 0.0;
  EXPECT_FALSE(check_gradients(gradcheck_ops().front(), opt).pass);
}

TEST(GradCheck, ReportJson) {
  const auto r = check_gradients(gradcheck_ops().front());
  const auto j = to_json(r);
  EXPECT_EQ(j.at("op").get<std::string>(), r.op);
  EXPECT_EQ(j.at("pass").get<bool>(), r.pass);
}

TEST(Oracles, AllPassOnFewCases) {
  const auto report = oracle_suite(3, 5, 1e-12);
  EXPECT_TRUE(report.pass());
  for (const auto& op : report.ops) {
    EXPECT_TRUE(op.pass) << op.op << " " << op.max_abs_dev;
    EXPECT_GT(op.cases, 0u);
  }
}

TEST(Oracles, NegativeToleranceFails) {
  EXPECT_FALSE(oracle_suite(0, 2, -1.0).pass());
}

}  // namespace
}  // namespace a2fpn
