#pragma once

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "lasopt/config.hpp"
#include "lasopt/grid.hpp"

namespace lasopt {

// Shared theta-scheme operator for the forward heat equation and (transposed)
// for all sensitivities and the adjoint:
//   (M/dt + theta A) y^{n+1} = (M/dt - (1-theta) A) y^n + rhs,
// with M = rho c diag(volume weights) and A = kappa K0 + h_conv diag(boundary
// weights). Both matrices are symmetric, so the transpose scheme reuses the
// same factorization.
//
// An instance owns solver workspace; create one instance per concurrent task.
class DiscreteHeatOperator {
 public:
  DiscreteHeatOperator(const ModelConfig& cfg, const SlabGrid& grid)
      : grid_(&grid),
        dt_(cfg.T_final / grid.nt()),
        theta_(cfg.solver.theta),
        cg_tol_(cfg.solver.cg_tol),
        cg_max_iter_(cfg.solver.cg_max_iter) {
    const int n = grid.node_count();
    mass_diag_ = cfg.rho * cfg.c_heat * grid.volume_weights();
    robin_diag_ = cfg.h_conv * grid.boundary_weights();
    A_ = cfg.kappa * grid.stiffness();
    for (int i = 0; i < n; ++i) A_.coeffRef(i, i) += robin_diag_[i];
    A_.makeCompressed();

    Lp_ = A_ * theta_;
    for (int i = 0; i < n; ++i) Lp_.coeffRef(i, i) += mass_diag_[i] / dt_;
    Lp_.makeCompressed();

    dense_ = n < cfg.solver.dense_threshold;
    if (dense_) {
      llt_.compute(Eigen::MatrixXd(Lp_));
      if (llt_.info() != Eigen::Success)
        throw SolverError("implicit-step factorization failed", 0.0, 0);
    } else {
      jacobi_inv_ = Lp_.diagonal().cwiseInverse();
      if (cg_max_iter_ <= 0) cg_max_iter_ = 10 * n;
    }
  }

  double dt() const { return dt_; }
  double theta() const { return theta_; }
  int size() const { return static_cast<int>(mass_diag_.size()); }
  const SlabGrid& grid() const { return *grid_; }
  const Eigen::VectorXd& mass_diag() const { return mass_diag_; }
  const Eigen::SparseMatrix<double>& robin_stiffness() const { return A_; }
  const Eigen::SparseMatrix<double>& implicit_matrix() const { return Lp_; }

  // (M/dt - (1-theta) A) y
  Eigen::VectorXd apply_explicit(const Eigen::VectorXd& y) const {
    Eigen::VectorXd out = mass_diag_.cwiseProduct(y) / dt_;
    if (theta_ < 1.0) out.noalias() -= (1.0 - theta_) * (A_ * y);
    return out;
  }

  Eigen::VectorXd solve_implicit(const Eigen::VectorXd& b) const {
    if (dense_) return llt_.solve(b);
    return pcg(b);
  }

  // One theta step from y^n with time-combined load rhs.
  Eigen::VectorXd step(const Eigen::VectorXd& yn, const Eigen::VectorXd& rhs) const {
    return solve_implicit(apply_explicit(yn) + rhs);
  }

 private:
  Eigen::VectorXd pcg(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd r = b;
    const double b_norm = b.norm();
    if (b_norm == 0.0) return x;
    Eigen::VectorXd z = jacobi_inv_.cwiseProduct(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    for (int it = 0; it < cg_max_iter_; ++it) {
      Eigen::VectorXd Ap = Lp_ * p;
      const double alpha = rz / p.dot(Ap);
      x += alpha * p;
      r -= alpha * Ap;
      if (r.norm() <= cg_tol_ * b_norm) return x;
      z = jacobi_inv_.cwiseProduct(r);
      const double rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
    }
    throw SolverError("conjugate gradient did not converge", r.norm() / b_norm,
                      cg_max_iter_);
  }

  const SlabGrid* grid_;
  double dt_, theta_, cg_tol_;
  int cg_max_iter_{0};
  Eigen::VectorXd mass_diag_, robin_diag_;
  Eigen::SparseMatrix<double> A_, Lp_;
  bool dense_{true};
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd jacobi_inv_;
};

}  // namespace lasopt
