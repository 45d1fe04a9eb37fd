#include "apr/ode.hpp"
#include "apr/errors.hpp"

#include <cmath>
#include <string>

namespace apr {

namespace {

// Dormand-Prince RK5(4)7M coefficients.
const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
const double a21 = 1.0 / 5;
const double a31 = 3.0 / 40, a32 = 9.0 / 40;
const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
             a54 = -212.0 / 729;
const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
             a64 = 49.0 / 176, a65 = -5103.0 / 18656;
const double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
             a75 = -2187.0 / 6784, a76 = 11.0 / 84;
// e = b5 - b4, error estimator weights.
const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
             e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense output weights.
const double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
             d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
             d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

} // namespace

Eigen::VectorXd OdeSolver::integrate(double t0, double t1, Eigen::VectorXd y,
                                     const StepCallback& cb) {
    const long n = y.size();
    n_steps_ = n_rejected_ = 0;
    t_end_ = t0;
    if (t1 == t0) return y;
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    const double hmax = opt_.h_max > 0 ? opt_.h_max : span;

    Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), err(n);
    DenseStep ds;

    f_(t0, y, k1);
    double h = opt_.h_init;
    if (h <= 0) {
        // Trial step from state and slope magnitudes.
        double sc = opt_.abs_tol + opt_.rel_tol * y.norm();
        double d0 = y.norm() / sc, d1n = k1.norm() / sc;
        h = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 * span : 0.01 * d0 / d1n;
    }
    h = std::min(h, hmax) * dir;

    double t = t0;
    bool last = false;
    for (long step = 0; step < opt_.max_steps; ++step) {
        if ((t + h - t1) * dir >= 0) {
            h = t1 - t;
            last = true;
        }
        ytmp = y + h * a21 * k1;
        f_(t + c2 * h, ytmp, k2);
        ytmp = y + h * (a31 * k1 + a32 * k2);
        f_(t + c3 * h, ytmp, k3);
        ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
        f_(t + c4 * h, ytmp, k4);
        ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        f_(t + c5 * h, ytmp, k5);
        ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        f_(t + h, ytmp, k6);
        ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        f_(t + h, ynew, k7);
        err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double errnorm = 0;
        for (long i = 0; i < n; ++i) {
            double sc = opt_.abs_tol +
                        opt_.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            double r = err[i] / sc;
            errnorm += r * r;
        }
        errnorm = std::sqrt(errnorm / double(n));

        if (errnorm <= 1.0) {
            // Accept.
            ++n_steps_;
            if (cb) {
                ds.t0 = t;
                ds.h = h;
                ds.r1 = y;
                ds.r2 = ynew - y;
                ds.r3 = h * k1 - ds.r2;
                ds.r4 = ds.r2 - h * k7 - ds.r3;
                ds.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
            }
            t += h;
            y.swap(ynew);
            k1.swap(k7); // FSAL
            t_end_ = t;
            if (cb && !cb(ds, y, t)) return y;
            if (last) return y;
            double fac = 0.9 * std::pow(std::max(errnorm, 1e-10), -0.2);
            h *= std::min(5.0, std::max(0.2, fac));
            if (std::abs(h) > hmax) h = hmax * dir;
        } else {
            ++n_rejected_;
            last = false;
            double fac = 0.9 * std::pow(errnorm, -0.2);
            h *= std::max(0.1, fac);
            if (std::abs(h) < 1e-14 * span)
                throw NumericalError("ode: step size underflow at t=" + std::to_string(t));
        }
    }
    throw NumericalError("ode: max step count exceeded at t=" + std::to_string(t));
}

Eigen::MatrixXd OdeSolver::sample(double t0, double t1, const Eigen::VectorXd& y0,
                                  const std::vector<double>& times) {
    Eigen::MatrixXd out(times.size(), y0.size());
    const double dir = t1 >= t0 ? 1.0 : -1.0;
    size_t idx = 0;
    // Emit any requested samples that coincide with t0.
    while (idx < times.size() && (times[idx] - t0) * dir <= 0) {
        out.row(idx++) = y0.transpose();
    }
    auto cb = [&](const DenseStep& ds, const Eigen::VectorXd& y, double t) {
        while (idx < times.size() && (times[idx] - t) * dir <= 1e-14 * std::abs(t1 - t0)) {
            double tq = times[idx];
            if ((tq - ds.t0) * dir <= 0)
                out.row(idx) = ds.eval(ds.t0).transpose();
            else if ((tq - t) * dir >= 0)
                out.row(idx) = y.transpose();
            else
                out.row(idx) = ds.eval(tq).transpose();
            ++idx;
        }
        return true;
    };
    Eigen::VectorXd yend = integrate(t0, t1, y0, cb);
    while (idx < times.size()) out.row(idx++) = yend.transpose();
    return out;
}

} // namespace apr
