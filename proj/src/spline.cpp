#include "apr/spline.hpp"
#include "apr/errors.hpp"

#include <algorithm>
#include <cmath>

namespace apr {

VectorSpline VectorSpline::fit(std::vector<double> x, Eigen::MatrixXd y) {
    const int n = int(x.size());
    if (n < 2 || y.rows() != n) throw ConfigError("spline: need >=2 knots matching rows");
    for (int i = 1; i < n; ++i)
        if (!(x[i] > x[i - 1])) throw ConfigError("spline: knots must increase strictly");

    VectorSpline s;
    s.x_ = std::move(x);
    s.y_ = std::move(y);
    s.m2_ = Eigen::MatrixXd::Zero(n, s.y_.cols());
    if (n == 2) return s;

    // Tridiagonal system for interior second derivatives, natural ends.
    const int ni = n - 2;
    Eigen::VectorXd a(ni), b(ni), c(ni);
    Eigen::MatrixXd r(ni, s.y_.cols());
    for (int i = 0; i < ni; ++i) {
        double h0 = s.x_[i + 1] - s.x_[i], h1 = s.x_[i + 2] - s.x_[i + 1];
        a[i] = h0 / 6.0;
        b[i] = (h0 + h1) / 3.0;
        c[i] = h1 / 6.0;
        r.row(i) = (s.y_.row(i + 2) - s.y_.row(i + 1)) / h1 -
                   (s.y_.row(i + 1) - s.y_.row(i)) / h0;
    }
    // Thomas algorithm.
    for (int i = 1; i < ni; ++i) {
        double w = a[i] / b[i - 1];
        b[i] -= w * c[i - 1];
        r.row(i) -= w * r.row(i - 1);
    }
    s.m2_.row(n - 2) = r.row(ni - 1) / b[ni - 1];
    for (int i = ni - 2; i >= 0; --i)
        s.m2_.row(i + 1) = (r.row(i) - c[i] * s.m2_.row(i + 2)) / b[i];
    return s;
}

int VectorSpline::interval(double q) const {
    int lo = int(std::upper_bound(x_.begin(), x_.end(), q) - x_.begin()) - 1;
    return std::clamp(lo, 0, int(x_.size()) - 2);
}

void VectorSpline::eval(double q, Eigen::VectorXd& out) const {
    int i = interval(q);
    double h = x_[i + 1] - x_[i];
    double A = (x_[i + 1] - q) / h, B = 1.0 - A;
    out = A * y_.row(i) + B * y_.row(i + 1) +
          ((A * A * A - A) * m2_.row(i) + (B * B * B - B) * m2_.row(i + 1)) * (h * h / 6.0);
}

void VectorSpline::deriv(double q, Eigen::VectorXd& out) const {
    int i = interval(q);
    double h = x_[i + 1] - x_[i];
    double A = (x_[i + 1] - q) / h, B = 1.0 - A;
    out = (y_.row(i + 1) - y_.row(i)) / h +
          (-(3 * A * A - 1) * m2_.row(i) + (3 * B * B - 1) * m2_.row(i + 1)) * (h / 6.0);
}

Eigen::VectorXd VectorSpline::eval(double q) const {
    Eigen::VectorXd out;
    eval(q, out);
    return out;
}

Eigen::VectorXd VectorSpline::deriv(double q) const {
    Eigen::VectorXd out;
    deriv(q, out);
    return out;
}

CubicSpline CubicSpline::fit(const std::vector<double>& x, const Eigen::VectorXd& y) {
    CubicSpline c;
    c.s_ = VectorSpline::fit(x, Eigen::MatrixXd(y));
    return c;
}

double CubicSpline::eval(double q) const { return s_.eval(q)[0]; }
double CubicSpline::deriv(double q) const { return s_.deriv(q)[0]; }

void lagrange_weights(const double* xs, int m, double x, double* w) {
    for (int j = 0; j < m; ++j) {
        double p = 1.0;
        for (int k = 0; k < m; ++k)
            if (k != j) p *= (x - xs[k]) / (xs[j] - xs[k]);
        w[j] = p;
    }
}

int stencil_start(const std::vector<double>& grid, double x, int width) {
    int n = int(grid.size());
    if (n <= width) return 0;
    int lo = int(std::upper_bound(grid.begin(), grid.end(), x) - grid.begin()) - 1;
    lo = std::clamp(lo, 0, n - 2);
    // Center the stencil on the containing interval.
    return std::clamp(lo - (width - 2) / 2, 0, n - width);
}

LocalCubic3 LocalCubic3::fit(std::vector<double> g1, std::vector<double> g2,
                             std::vector<double> g3, Eigen::MatrixXd node_values) {
    LocalCubic3 L;
    if (g1.empty() || g2.empty() || g3.empty())
        throw ConfigError("lattice: empty axis");
    if (node_values.rows() != long(g1.size() * g2.size() * g3.size()))
        throw ConfigError("lattice: node count mismatch");
    auto check = [](const std::vector<double>& g) {
        for (size_t i = 1; i < g.size(); ++i)
            if (!(g[i] > g[i - 1])) throw ConfigError("lattice: axis must increase");
    };
    check(g1);
    check(g2);
    check(g3);
    L.g1_ = std::move(g1);
    L.g2_ = std::move(g2);
    L.g3_ = std::move(g3);
    L.v_ = std::move(node_values);
    return L;
}

void LocalCubic3::eval(double a, double b, double c, Eigen::VectorXd& out) const {
    const int n2 = int(g2_.size()), n3 = int(g3_.size());
    int m1 = std::min(4, int(g1_.size())), m2 = std::min(4, n2), m3 = std::min(4, n3);
    int i0 = stencil_start(g1_, a, m1);
    int j0 = stencil_start(g2_, b, m2);
    int k0 = stencil_start(g3_, c, m3);
    double w1[4], w2[4], w3[4];
    lagrange_weights(g1_.data() + i0, m1, a, w1);
    lagrange_weights(g2_.data() + j0, m2, b, w2);
    lagrange_weights(g3_.data() + k0, m3, c, w3);

    out.setZero(v_.cols());
    for (int i = 0; i < m1; ++i)
        for (int j = 0; j < m2; ++j) {
            double wij = w1[i] * w2[j];
            long base = long(i0 + i) * n2 * n3 + long(j0 + j) * n3 + k0;
            for (int k = 0; k < m3; ++k)
                out += (wij * w3[k]) * v_.row(base + k).transpose();
        }
}

Eigen::VectorXd LocalCubic3::eval(double a, double b, double c) const {
    Eigen::VectorXd out;
    eval(a, b, c, out);
    return out;
}

} // namespace apr
