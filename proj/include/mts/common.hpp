#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mts {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct NewtonDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MaxIterations : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InfeasibleSchedule : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mts
