#pragma once

#include <Eigen/Dense>
#include <vector>

namespace apr {

/** Natural cubic spline through (x_i, y_i) with x strictly increasing.
 *  All columns of a matrix-valued y share the factorization. Queries
 *  outside [x_front, x_back] evaluate the end cubics (extrapolation). */
class VectorSpline {
  public:
    VectorSpline() = default;

    static VectorSpline fit(std::vector<double> x, Eigen::MatrixXd y);

    void eval(double q, Eigen::VectorXd& out) const;
    void deriv(double q, Eigen::VectorXd& out) const;
    Eigen::VectorXd eval(double q) const;
    Eigen::VectorXd deriv(double q) const;

    int dim() const { return int(y_.cols()); }
    int n_knots() const { return int(x_.size()); }
    double x_min() const { return x_.front(); }
    double x_max() const { return x_.back(); }
    const std::vector<double>& knots() const { return x_; }

  private:
    int interval(double q) const;
    std::vector<double> x_;
    Eigen::MatrixXd y_;   // n x d values
    Eigen::MatrixXd m2_;  // n x d second derivatives
};

/** Scalar convenience wrapper. */
class CubicSpline {
  public:
    CubicSpline() = default;
    static CubicSpline fit(const std::vector<double>& x, const Eigen::VectorXd& y);
    double eval(double q) const;
    double deriv(double q) const;
    double x_min() const { return s_.x_min(); }
    double x_max() const { return s_.x_max(); }

  private:
    VectorSpline s_;
};

/** Tensor-product local cubic interpolation on a 3-D grid. Each node
 *  carries a vector of channels; eval combines 4x4x4 (or fewer near the
 *  boundary / on short axes) neighbouring nodes with per-axis Lagrange
 *  weights. Node (i,j,k) is row i*(n2*n3) + j*n3 + k. */
class LocalCubic3 {
  public:
    LocalCubic3() = default;

    static LocalCubic3 fit(std::vector<double> g1, std::vector<double> g2,
                           std::vector<double> g3, Eigen::MatrixXd node_values);

    void eval(double a, double b, double c, Eigen::VectorXd& out) const;
    Eigen::VectorXd eval(double a, double b, double c) const;

    int dim() const { return int(v_.cols()); }
    const std::vector<double>& grid1() const { return g1_; }
    const std::vector<double>& grid2() const { return g2_; }
    const std::vector<double>& grid3() const { return g3_; }

  private:
    std::vector<double> g1_, g2_, g3_;
    Eigen::MatrixXd v_;
};

/** Lagrange basis weights for a query x on the stencil xs[0..m-1] (m <= 4). */
void lagrange_weights(const double* xs, int m, double x, double* w);

/** Stencil start index for axis-local cubic interpolation: the largest i
 *  such that grid[i] <= x, pulled back so that [i0, i0+3] fits the grid. */
int stencil_start(const std::vector<double>& grid, double x, int width);

} // namespace apr
