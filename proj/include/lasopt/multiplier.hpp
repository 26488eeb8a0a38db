#pragma once

#include <vector>

#include <Eigen/Core>

namespace lasopt {

// Time-sampled Lagrange multiplier for the path constraint plus the scalar
// multiplier for tau. lambda pairs with trapezoid time weights; mu satisfies
// D_tau J + mu = 0, so it is <= 0 at tau = 3r, >= 0 at tau = T, 0 inside.
struct MultiplierEstimate {
  Eigen::VectorXd lambda;        // nodal, nonnegative
  double mu{0.0};
  std::vector<int> active_set;   // indices with g(gamma(t_i)) >= -eps_act
  double eps_act{0.0};

  static MultiplierEstimate zero(int nodes) {
    MultiplierEstimate m;
    m.lambda = Eigen::VectorXd::Zero(nodes);
    return m;
  }
};

}  // namespace lasopt
