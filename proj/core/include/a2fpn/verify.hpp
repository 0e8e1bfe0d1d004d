// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2fpn/tensor.hpp"

namespace a2fpn {

/// A function under test produced a NaN or infinity.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kRelErrFloor = 1e-8;
inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kCompositeTolerance = 1e-4;

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every
/// coordinate of x.
Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                const Tensor<double>& x, double eps);

struct GradCheckReport {
  std::string op;
  std::vector<Shape> shapes;
  double eps = 0;
  double tol = 0;
  double max_rel_err = 0;
  std::string worst;          // "tensor[index]" of the largest error
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t coordinates = 0;  // compared coordinates
  std::size_t kinks = 0;        // skipped: the perturbation crossed a ReLU/max-pool branch
  bool pass = false;
  double seconds = 0;
  std::string error;          // set when the check could not run
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  double eps = 1e-5;
  std::optional<double> tol;  // default: 1e-6 for primitives, 1e-4 otherwise
};

/// Names of every registered operation, primitives first.
const std::vector<std::string>& gradcheck_ops();
bool is_primitive_op(std::string_view op);

/// Random f64 inputs and parameters, loss = sum_k <w_k, out_k> with random
/// projections w_k; compares analytic adjoints of every input and parameter
/// with central differences. Large tensors are checked on a seeded subset of
/// coordinates. Perturbations that change a ReLU or max-pool branch are not
/// compared; more than 10% such coordinates fails the check. Throws
/// std::invalid_argument for unknown ops.
GradCheckReport check_gradients(std::string_view op, const GradCheckOptions& opt = {});

std::vector<GradCheckReport> run_gradcheck_suite(const GradCheckOptions& opt = {});

nlohmann::json to_json(const GradCheckReport& r);
nlohmann::json gradcheck_report_json(const std::vector<GradCheckReport>& reports);

// ---------------------------------------------------------------------------
// Naive-loop oracles
// ---------------------------------------------------------------------------

struct OracleResult {
  std::string op;
  std::size_t cases = 0;
  double max_abs_dev = 0;
  Shape worst_shape;
  bool pass = false;
  double seconds = 0;
};

struct OracleReport {
  double tol = 0;
  std::vector<OracleResult> ops;

  bool pass() const;
};

/// Runs every oracle on `cases` random shapes (the pixel-shuffle round trip
/// on 20) and compares against the production kernels in f64.
OracleReport oracle_suite(std::uint64_t seed = 0, std::size_t cases = 50, double tol = 1e-12);

nlohmann::json to_json(const OracleReport& r);

}  // namespace a2fpn
