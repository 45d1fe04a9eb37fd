#pragma once

#include "apr/reduce.hpp"

#include <functional>

namespace apr {

/** Time-dependent input, one entry per system input channel. */
using InputSignal = std::function<Eigen::VectorXd(double)>;

InputSignal input_zero(int m);
/** a * sin(omega_f * t + phase) on one channel. */
InputSignal input_sine(int m, int channel, double a, double omega_f, double phase = 0);
/** rate * t * sin(2 pi t / period) on one channel. */
InputSignal input_ramp_sine(int m, int channel, double rate, double period);
/** Linear interpolation of sampled rows; constant beyond the table. */
InputSignal input_tabulated(Eigen::VectorXd times, Eigen::MatrixXd samples);

inline OdeOptions sim_ode_options() {
    OdeOptions o;
    o.rel_tol = 1e-8;
    o.abs_tol = 1e-10;
    return o;
}

/** Integrates the reduced equations from `init`, sampling every dt_out.
 *  Stops at t1, or earlier at the family edge (the exit time is located
 *  on the integrator's dense output, so the last sample sits within one
 *  step of the edge) or at a singular solve. */
SimulationTrace simulate_reduced(const ReducedModel& m, const InputSignal& u,
                                 const ReducedState& init, double t0, double t1, double dt_out,
                                 const OdeOptions& ode = sim_ode_options());

/** Integrates the full model xdot = F(x, u(t)). */
SimulationTrace simulate_full(const DynamicalSystem& sys, const InputSignal& u,
                              const Eigen::VectorXd& x0, double t0, double t1, double dt_out,
                              const OdeOptions& ode = sim_ode_options());

/** Integrates the linearization xdot = A (x - x_ss) + B u(t) about the
 *  fixed point x_ss. */
SimulationTrace simulate_linear(const DynamicalSystem& sys, const Eigen::VectorXd& x_ss,
                                const InputSignal& u, const Eigen::VectorXd& x0, double t0,
                                double t1, double dt_out,
                                const OdeOptions& ode = sim_ode_options());

struct SteadyStateOptions {
    double settle_tol = 1e-3;  // successive-period amplitude agreement
    int min_periods = 8;       // settling time before amplitude checks
    int max_periods = 2000;
    /** Start state for the full-model overload (empty = origin). */
    Eigen::VectorXd x0;
    OdeOptions ode = sim_ode_options();
};

/** Peak-to-peak range of the observable over one period of the periodic
 *  steady state under u = a sin(omega_f t) on `channel`. The transient is
 *  integrated until two consecutive periods agree; no convergence within
 *  the period budget is a NumericalError. */
double steady_state_amplitude(const DynamicalSystem& sys, double a, double omega_f,
                              const std::function<double(const Eigen::VectorXd&)>& observable,
                              int channel = 0, const SteadyStateOptions& opt = {});

/** Reduced-model counterpart; the observable sees reconstructed states. */
double steady_state_amplitude(const ReducedModel& m, double a, double omega_f,
                              const std::function<double(const Eigen::VectorXd&)>& observable,
                              int channel = 0, const SteadyStateOptions& opt = {});

/** Linearized-model counterpart (integrated, not transfer-function based,
 *  so nonlinear observables are allowed). */
double steady_state_amplitude(const DynamicalSystem& sys, const Eigen::VectorXd& x_ss, double a,
                              double omega_f,
                              const std::function<double(const Eigen::VectorXd&)>& observable,
                              int channel = 0, const SteadyStateOptions& opt = {});

} // namespace apr
