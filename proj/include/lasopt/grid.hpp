#pragma once

#include <tuple>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "lasopt/types.hpp"

namespace lasopt {

enum class BoundaryTag : unsigned char { None = 0, Top, Side, Bottom };

// Rectilinear discretization of the slab Omega = [0,Lx] x [0,Ly] x
// [-thickness, 0]. The top surface (z = 0) is the scanned face, the bottom
// sits on the previous layer, the four lateral faces are the sides.
//
// Quadrature is trapezoidal per axis. Each boundary face keeps its own
// weight array covering the face closure, so face weights sum to exact face
// areas; rim nodes appear in two face quadratures but carry a single tag
// (top/bottom win over side).
class SlabGrid {
 public:
  SlabGrid(double Lx, double Ly, double thickness, int nx, int ny, int nz,
           int nt)
      : Lx_(Lx), Ly_(Ly), thickness_(thickness), nx_(nx), ny_(ny), nz_(nz), nt_(nt) {
    if (nx < 3) throw ConfigError("grid.nx", "must be >= 3");
    if (ny < 3) throw ConfigError("grid.ny", "must be >= 3");
    if (nz < 2) throw ConfigError("grid.nz", "must be >= 2");
    if (nt < 2) throw ConfigError("grid.nt", "must be >= 2");
    if (!(Lx > 0.0)) throw ConfigError("grid.Lx", "must be positive");
    if (!(Ly > 0.0)) throw ConfigError("grid.Ly", "must be positive");
    if (!(thickness > 0.0)) throw ConfigError("grid.thickness", "must be positive");
    build();
  }

  double Lx() const { return Lx_; }
  double Ly() const { return Ly_; }
  double thickness() const { return thickness_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  int nt() const { return nt_; }
  int node_count() const { return nx_ * ny_ * nz_; }
  double hx() const { return Lx_ / (nx_ - 1); }
  double hy() const { return Ly_ / (ny_ - 1); }
  double hz() const { return thickness_ / (nz_ - 1); }

  int index(int i, int j, int k) const { return (k * ny_ + j) * nx_ + i; }

  Eigen::Vector3d coord(int id) const {
    int i = id % nx_;
    int j = (id / nx_) % ny_;
    int k = id / (nx_ * ny_);
    return {i * hx(), j * hy(), -thickness_ + k * hz()};
  }
  Vec2 top_coord(int id) const {
    Eigen::Vector3d c = coord(id);
    return {c.x(), c.y()};
  }

  BoundaryTag tag(int id) const { return tags_[static_cast<size_t>(id)]; }
  const Eigen::VectorXd& volume_weights() const { return vol_w_; }
  const Eigen::VectorXd& top_weights() const { return top_w_; }
  const Eigen::VectorXd& bottom_weights() const { return bottom_w_; }
  const Eigen::VectorXd& side_weights() const { return side_w_; }
  const Eigen::VectorXd& boundary_weights() const { return boundary_w_; }
  const std::vector<int>& top_nodes() const { return top_nodes_; }
  const std::vector<int>& bottom_nodes() const { return bottom_nodes_; }

  // Unit-conductivity stiffness matrix; y^T K0 y approximates the Dirichlet
  // energy integral of |grad y|^2.
  const Eigen::SparseMatrix<double>& stiffness() const { return K0_; }

  // Edge-sum form of y^T K0 y. Exactly zero on constant fields and never
  // negative, unlike the matvec form which carries rowsum roundoff.
  double dirichlet_energy(const Eigen::VectorXd& y) const {
    double s = 0.0;
    for (const auto& e : edges_) {
      double d = y[std::get<0>(e)] - y[std::get<1>(e)];
      s += std::get<2>(e) * d * d;
    }
    return s;
  }

 private:
  void build() {
    const int n = node_count();
    vol_w_.setZero(n);
    top_w_.setZero(n);
    bottom_w_.setZero(n);
    side_w_.setZero(n);
    tags_.assign(static_cast<size_t>(n), BoundaryTag::None);

    auto axis_w = [](int m, double h, int idx) {
      return (idx == 0 || idx == m - 1) ? 0.5 * h : h;
    };

    for (int k = 0; k < nz_; ++k)
      for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
          const int id = index(i, j, k);
          const double wx = axis_w(nx_, hx(), i);
          const double wy = axis_w(ny_, hy(), j);
          const double wz = axis_w(nz_, hz(), k);
          vol_w_[id] = wx * wy * wz;
          const bool top = (k == nz_ - 1);
          const bool bottom = (k == 0);
          const bool side = (i == 0 || i == nx_ - 1 || j == 0 || j == ny_ - 1);
          if (top) {
            top_w_[id] = wx * wy;
            top_nodes_.push_back(id);
          }
          if (bottom) {
            bottom_w_[id] = wx * wy;
            bottom_nodes_.push_back(id);
          }
          if (side) {
            double w = 0.0;
            if (i == 0 || i == nx_ - 1) w += wy * wz;
            if (j == 0 || j == ny_ - 1) w += wx * wz;
            side_w_[id] = w;
          }
          if (top)
            tags_[static_cast<size_t>(id)] = BoundaryTag::Top;
          else if (bottom)
            tags_[static_cast<size_t>(id)] = BoundaryTag::Bottom;
          else if (side)
            tags_[static_cast<size_t>(id)] = BoundaryTag::Side;
        }
    boundary_w_ = top_w_ + bottom_w_ + side_w_;

    // Edge-conductance assembly of the 7-point stencil; each edge carries the
    // transversal trapezoid area over the edge length.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(n) * 7);
    auto add_edge = [&](int a, int b, double c) {
      edges_.emplace_back(a, b, c);
      trip.emplace_back(a, a, c);
      trip.emplace_back(b, b, c);
      trip.emplace_back(a, b, -c);
      trip.emplace_back(b, a, -c);
    };
    for (int k = 0; k < nz_; ++k)
      for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
          const double wx = axis_w(nx_, hx(), i);
          const double wy = axis_w(ny_, hy(), j);
          const double wz = axis_w(nz_, hz(), k);
          if (i + 1 < nx_) add_edge(index(i, j, k), index(i + 1, j, k), wy * wz / hx());
          if (j + 1 < ny_) add_edge(index(i, j, k), index(i, j + 1, k), wx * wz / hy());
          if (k + 1 < nz_) add_edge(index(i, j, k), index(i, j, k + 1), wx * wy / hz());
        }
    K0_.resize(n, n);
    K0_.setFromTriplets(trip.begin(), trip.end());
    K0_.makeCompressed();
  }

  double Lx_, Ly_, thickness_;
  int nx_, ny_, nz_, nt_;
  Eigen::VectorXd vol_w_, top_w_, bottom_w_, side_w_, boundary_w_;
  std::vector<BoundaryTag> tags_;
  std::vector<int> top_nodes_, bottom_nodes_;
  std::vector<std::tuple<int, int, double>> edges_;
  Eigen::SparseMatrix<double> K0_;
};

}  // namespace lasopt
