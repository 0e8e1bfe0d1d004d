// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2fpn/init.hpp"

#include <cmath>

#include <Eigen/QR>

namespace a2fpn {

template <typename T>
Tensor<T> kaiming_normal(const Shape& shape, std::size_t fan_in, Rng& rng,
                         double gain) {
  return random_normal<T>(shape, rng, gain / std::sqrt(static_cast<double>(fan_in)));
}

template <typename T>
Tensor<T> orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
  const bool wide = rows <= cols;
  const Eigen::Index tall_rows = static_cast<Eigen::Index>(wide ? cols : rows);
  const Eigen::Index tall_cols = static_cast<Eigen::Index>(wide ? rows : cols);
  Eigen::MatrixXd g(tall_rows, tall_cols);
  for (Eigen::Index j = 0; j < tall_cols; ++j)
    for (Eigen::Index i = 0; i < tall_rows; ++i) g(i, j) = rng.normal();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall_rows, tall_cols);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(tall_cols).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < tall_cols; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;

  Tensor<T> out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out(i, j) = static_cast<T>(wide ? q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))
                                      : q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  return out;
}

template Tensor<float> kaiming_normal(const Shape&, std::size_t, Rng&, double);
template Tensor<double> kaiming_normal(const Shape&, std::size_t, Rng&, double);
template Tensor<float> orthogonal(std::size_t, std::size_t, Rng&);
template Tensor<double> orthogonal(std::size_t, std::size_t, Rng&);

}  // namespace a2fpn
