#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace apr {

/** Right-hand side f(t, y, dydt). dydt is preallocated to y's size. */
using RhsFn = std::function<void(double, const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct OdeOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double h_init = 0.0;   // 0 = choose automatically
    double h_max = 0.0;    // 0 = |t1 - t0|
    long max_steps = 20000000;
};

/** One accepted step of the integrator together with its dense-output
 *  interpolant, valid for t in [t0, t0+h] (or [t0+h, t0] when stepping
 *  backwards). */
class DenseStep {
  public:
    double t0 = 0, h = 0;
    Eigen::VectorXd r1, r2, r3, r4, r5; // interpolation coefficients

    Eigen::VectorXd eval(double t) const {
        double s = (t - t0) / h, s1 = 1.0 - s;
        return r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
    }
};

/** Called after each accepted step; return false to stop the integration. */
using StepCallback = std::function<bool(const DenseStep&, const Eigen::VectorXd& y, double t)>;

/** Adaptive Dormand-Prince 5(4) with dense output. */
class OdeSolver {
  public:
    OdeSolver(RhsFn f, OdeOptions opt = {}) : f_(std::move(f)), opt_(opt) {}

    /** Integrate y from t0 to t1 (t1 < t0 allowed). Returns y(t_end) where
     *  t_end is t1, or the end of the last accepted step if cb stopped the
     *  run early. */
    Eigen::VectorXd integrate(double t0, double t1, Eigen::VectorXd y0,
                              const StepCallback& cb = {});

    /** Integrate and record y at the given times (must be sorted along the
     *  direction of integration, within [t0, t1]). Rows of out are states. */
    Eigen::MatrixXd sample(double t0, double t1, const Eigen::VectorXd& y0,
                           const std::vector<double>& times);

    /** Statistics for the last integrate() call. */
    long n_steps() const { return n_steps_; }
    long n_rejected() const { return n_rejected_; }
    double t_end() const { return t_end_; }

  private:
    RhsFn f_;
    OdeOptions opt_;
    long n_steps_ = 0, n_rejected_ = 0;
    double t_end_ = 0;
};

} // namespace apr
