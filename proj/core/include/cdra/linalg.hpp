#pragma once

#include <Eigen/Dense>

namespace cdra {

// Rows are entities (users, items, batch members).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace cdra
