#include "apr/simulate.hpp"

#include "apr/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace apr {

using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_2pi(double theta) {
    double t = std::fmod(theta, 2.0 * kPi);
    return t < 0 ? t + 2.0 * kPi : t;
}

} // namespace

InputSignal input_zero(int m) {
    return [m](double) { return VectorXd::Zero(m).eval(); };
}

InputSignal input_sine(int m, int channel, double a, double omega_f, double phase) {
    return [=](double t) {
        VectorXd u = VectorXd::Zero(m);
        u[channel] = a * std::sin(omega_f * t + phase);
        return u;
    };
}

InputSignal input_ramp_sine(int m, int channel, double rate, double period) {
    return [=](double t) {
        VectorXd u = VectorXd::Zero(m);
        u[channel] = rate * t * std::sin(2.0 * kPi * t / period);
        return u;
    };
}

InputSignal input_tabulated(VectorXd times, MatrixXd samples) {
    if (times.size() != samples.rows() || times.size() < 1)
        throw ConfigError("tabulated input needs one sample row per time stamp");
    return [times = std::move(times), samples = std::move(samples)](double t) -> VectorXd {
        const int n = int(times.size());
        if (t <= times[0]) return samples.row(0);
        if (t >= times[n - 1]) return samples.row(n - 1);
        int lo = 0, hi = n - 1;
        while (hi - lo > 1) {
            const int mid = (lo + hi) / 2;
            (times[mid] <= t ? lo : hi) = mid;
        }
        const double w = (t - times[lo]) / (times[lo + 1] - times[lo]);
        return (1.0 - w) * samples.row(lo) + w * samples.row(lo + 1);
    };
}

namespace {

/** Flat ODE coordinates of a reduced state:
 *  [theta, q (P), Re psi (R), Im psi (R)]. */
VectorXd pack_reduced(const ReducedState& s, int P, int R) {
    VectorXd y(1 + P + 2 * R);
    y[0] = s.theta;
    y.segment(1, P) = s.q;
    for (int r = 0; r < R; ++r) {
        y[1 + P + r] = s.psi[r].real();
        y[1 + P + R + r] = s.psi[r].imag();
    }
    return y;
}

ReducedState unpack_reduced(const VectorXd& y, int P, int R) {
    ReducedState s;
    s.theta = y[0];
    s.q = y.segment(1, P);
    s.psi.resize(R);
    for (int r = 0; r < R; ++r) s.psi[r] = {y[1 + P + r], y[1 + P + R + r]};
    return s;
}

RhsFn reduced_ode_rhs(const ReducedModel& m, const InputSignal& u, int P, int R) {
    return [&m, &u, P, R](double t, const VectorXd& y, VectorXd& dy) {
        const ReducedState s = unpack_reduced(y, P, R);
        const ReducedDeriv d = reduced_rhs(m, s, u(t));
        dy[0] = d.theta_dot;
        dy.segment(1, P) = d.q_dot;
        for (int r = 0; r < R; ++r) {
            dy[1 + P + r] = d.psi_dot[r].real();
            dy[1 + P + R + r] = d.psi_dot[r].imag();
        }
    };
}

} // namespace

SimulationTrace simulate_reduced(const ReducedModel& m, const InputSignal& u,
                                 const ReducedState& init, double t0, double t1, double dt_out,
                                 const OdeOptions& ode) {
    const int P = m.n_params();
    const int R = int(m.retained().size());
    if (init.q.size() != P)
        throw ConfigError("initial amplitude has the wrong number of coordinates");
    if (init.psi.size() != R)
        throw ConfigError("initial state carries the wrong number of retained coordinates");
    if (!m.in_range(init.q))
        throw FamilyRangeError("initial amplitude lies outside the family range");

    SimulationTrace tr;
    std::vector<VectorXd> rows_x, rows_u;
    auto record = [&](double t, const VectorXd& y) {
        ReducedState s = unpack_reduced(y, P, R);
        s.theta = wrap_2pi(s.theta);
        tr.t.push_back(t);
        rows_x.push_back(reconstruct_state(m, s));
        rows_u.push_back(u(t));
        tr.reduced.push_back(std::move(s));
    };

    const VectorXd y0 = pack_reduced(init, P, R);
    record(t0, y0);
    double next_out = t0 + dt_out;
    bool hit_edge = false;
    double t_edge = t1;
    VectorXd y_edge;

    auto q_inside = [&](const VectorXd& y) { return m.in_range(y.segment(1, P)); };
    auto cb = [&](const DenseStep& step, const VectorXd& y_end, double t) -> bool {
        double t_stop = t;
        // Locate the first family-edge crossing on this step's dense
        // output: coarse scan, then bisection onto the crossing.
        const int n_scan = 17;
        double t_in = step.t0;
        bool crossed = false;
        double t_out_side = t;
        for (int i = 1; i <= n_scan; ++i) {
            const double ts = step.t0 + step.h * i / n_scan;
            const VectorXd ys = (i == n_scan) ? y_end : step.eval(ts);
            if (q_inside(ys)) {
                t_in = ts;
            } else {
                crossed = true;
                t_out_side = ts;
                break;
            }
        }
        if (crossed) {
            for (int it = 0; it < 60 && t_out_side - t_in > 1e-12 * (1.0 + std::abs(t)); ++it) {
                const double tm = 0.5 * (t_in + t_out_side);
                (q_inside(step.eval(tm)) ? t_in : t_out_side) = tm;
            }
            hit_edge = true;
            t_edge = t_in;
            y_edge = step.eval(t_in);
            t_stop = t_in;
        }
        while (next_out <= t_stop + 1e-12 * (1.0 + std::abs(t_stop))) {
            record(next_out, step.eval(std::min(next_out, t_stop)));
            next_out += dt_out;
        }
        return !crossed;
    };

    OdeSolver solver(reduced_ode_rhs(m, u, P, R), ode);
    try {
        solver.integrate(t0, t1, y0, cb);
        if (hit_edge) {
            if (tr.t.empty() || tr.t.back() < t_edge - 1e-12 * (1.0 + std::abs(t_edge)))
                record(t_edge, y_edge);
            tr.termination = TerminationReason::family_boundary;
            std::ostringstream os;
            os << "amplitude reached the family edge at t = " << t_edge;
            tr.note = os.str();
        }
    } catch (const SingularityError& e) {
        tr.termination = TerminationReason::singularity;
        tr.note = e.what();
    } catch (const FamilyRangeError& e) {
        // A stage stepped past the margin before the edge scan saw the
        // crossing; the trace still ends at the last in-range sample.
        tr.termination = TerminationReason::family_boundary;
        tr.note = e.what();
    }

    tr.states.resize(int(rows_x.size()), m.dim_state());
    tr.inputs.resize(int(rows_u.size()), m.system().dim_input);
    for (size_t i = 0; i < rows_x.size(); ++i) {
        tr.states.row(int(i)) = rows_x[i];
        tr.inputs.row(int(i)) = rows_u[i];
    }
    return tr;
}

namespace {

SimulationTrace sample_ode(const RhsFn& rhs, const InputSignal& u, const VectorXd& x0, double t0,
                           double t1, double dt_out, const OdeOptions& ode,
                           const std::function<VectorXd(const VectorXd&)>& to_state) {
    std::vector<double> times;
    for (double t = t0; t <= t1 + 1e-12 * (1.0 + std::abs(t1)); t += dt_out) times.push_back(t);
    OdeSolver solver(rhs, ode);
    const MatrixXd Y = solver.sample(t0, t1, x0, times);

    SimulationTrace tr;
    tr.t = times;
    tr.states.resize(Y.rows(), x0.size());
    tr.inputs.resize(Y.rows(), u(t0).size());
    for (int i = 0; i < Y.rows(); ++i) {
        tr.states.row(i) = to_state(Y.row(i));
        tr.inputs.row(i) = u(times[size_t(i)]);
    }
    return tr;
}

} // namespace

SimulationTrace simulate_full(const DynamicalSystem& sys, const InputSignal& u,
                              const VectorXd& x0, double t0, double t1, double dt_out,
                              const OdeOptions& ode) {
    RhsFn rhs = [&sys, &u](double t, const VectorXd& x, VectorXd& dx) {
        dx = sys.eval_rhs(x, u(t));
    };
    return sample_ode(rhs, u, x0, t0, t1, dt_out, ode, [](const VectorXd& y) { return y; });
}

SimulationTrace simulate_linear(const DynamicalSystem& sys, const VectorXd& x_ss,
                                const InputSignal& u, const VectorXd& x0, double t0, double t1,
                                double dt_out, const OdeOptions& ode) {
    const LinearizedModel lin = linearized_model(sys, x_ss);
    RhsFn rhs = [lin, &u](double t, const VectorXd& dxv, VectorXd& ddx) {
        ddx = lin.A * dxv + lin.B * u(t);
    };
    return sample_ode(rhs, u, VectorXd(x0 - x_ss), t0, t1, dt_out, ode,
                      [x_ss](const VectorXd& y) { return VectorXd(x_ss + y); });
}

namespace {

/** Drives any of the three backends to a periodic steady state: advance
 *  one forcing period at a time, measure the observable's peak-to-peak
 *  range on a dense in-period grid, stop when two consecutive periods
 *  agree to settle_tol (relative). */
double settle_amplitude(const RhsFn& rhs, VectorXd y, double omega_f,
                        const std::function<double(const VectorXd&)>& obs_of_y,
                        const SteadyStateOptions& opt) {
    const double T = 2.0 * kPi / omega_f;
    const int n_in_period = 256;
    double prev_amp = -1;
    double t = 0;
    OdeSolver solver(rhs, opt.ode);
    for (int p = 0; p < opt.max_periods; ++p) {
        std::vector<double> times(n_in_period + 1);
        for (int i = 0; i <= n_in_period; ++i) times[size_t(i)] = t + T * i / n_in_period;
        const MatrixXd Y = solver.sample(t, t + T, y, times);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int i = 0; i <= n_in_period; ++i) {
            const double v = obs_of_y(Y.row(i));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double amp = hi - lo;
        y = Y.row(n_in_period);
        t += T;
        if (p + 1 >= opt.min_periods && prev_amp >= 0 &&
            std::abs(amp - prev_amp) <= opt.settle_tol * std::max(amp, 1e-12))
            return amp;
        prev_amp = amp;
    }
    std::ostringstream os;
    os << "response did not settle to a periodic steady state within " << opt.max_periods
       << " forcing periods (last amplitude " << prev_amp << ")";
    throw NumericalError(os.str());
}

} // namespace

double steady_state_amplitude(const DynamicalSystem& sys, double a, double omega_f,
                              const std::function<double(const VectorXd&)>& observable,
                              int channel, const SteadyStateOptions& opt) {
    const InputSignal u = input_sine(sys.dim_input, channel, a, omega_f);
    RhsFn rhs = [&sys, u](double t, const VectorXd& x, VectorXd& dx) {
        dx = sys.eval_rhs(x, u(t));
    };
    const VectorXd x0 =
        opt.x0.size() == sys.dim_state ? opt.x0 : VectorXd::Zero(sys.dim_state).eval();
    return settle_amplitude(rhs, x0, omega_f, observable, opt);
}

double steady_state_amplitude(const ReducedModel& m, double a, double omega_f,
                              const std::function<double(const VectorXd&)>& observable,
                              int channel, const SteadyStateOptions& opt) {
    const int P = m.n_params();
    const int R = int(m.retained().size());
    const InputSignal u = input_sine(m.system().dim_input, channel, a, omega_f);

    ReducedState s0;
    s0.theta = 0;
    s0.q = VectorXd::Zero(P);
    // Just off the origin: the solve is singular exactly at q = 0.
    s0.q[0] = m.q_lower()[0] + 1e-3 * (m.q_upper()[0] - m.q_lower()[0]);
    s0.psi = VectorXcd::Zero(R);

    auto obs = [&](const VectorXd& y) {
        ReducedState s = unpack_reduced(y, P, R);
        s.theta = wrap_2pi(s.theta);
        return observable(reconstruct_state(m, s));
    };
    return settle_amplitude(reduced_ode_rhs(m, u, P, R), pack_reduced(s0, P, R), omega_f, obs,
                            opt);
}

double steady_state_amplitude(const DynamicalSystem& sys, const VectorXd& x_ss, double a,
                              double omega_f,
                              const std::function<double(const VectorXd&)>& observable,
                              int channel, const SteadyStateOptions& opt) {
    const LinearizedModel lin = linearized_model(sys, x_ss);
    const InputSignal u = input_sine(sys.dim_input, channel, a, omega_f);
    RhsFn rhs = [lin, u](double t, const VectorXd& dx, VectorXd& ddx) {
        ddx = lin.A * dx + lin.B * u(t);
    };
    auto obs = [&](const VectorXd& y) { return observable(VectorXd(x_ss + y)); };
    return settle_amplitude(rhs, VectorXd::Zero(sys.dim_state), omega_f, obs, opt);
}

} // namespace apr
