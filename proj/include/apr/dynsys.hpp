#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace apr {

/** Continuous-time controlled system xdot = F(x, u). Analytic Jacobians are
 *  optional; eval_jac_* falls back to central finite differences with step
 *  1e-6*(1+|x_i|) per component. */
struct DynamicalSystem {
    int dim_state = 0;
    int dim_input = 0;
    std::string name;

    std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::VectorXd&)> rhs;
    std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::MatrixXd&)> jac_state;
    std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::MatrixXd&)> jac_input;

    Eigen::VectorXd eval_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
    Eigen::VectorXd eval_rhs(const Eigen::VectorXd& x) const; // u = 0
    Eigen::MatrixXd eval_jac_state(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
    Eigen::MatrixXd eval_jac_input(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
    Eigen::VectorXd zero_input() const { return Eigen::VectorXd::Zero(dim_input); }
};

struct PendulumParams {
    double mass = 0.104;   // kg
    double length = 9.8;   // m
    double damping = 1.0;  // N m s
    double gravity = 9.8;  // m/s^2
};

struct PlanarPopulationParams {
    int count = 10;
    double coupling = 1.2;
    double sigma = 0.1;
    Eigen::VectorXd mu;   // per-oscillator offsets, all negative
    Eigen::VectorXd rho;  // per-oscillator shear
    static PlanarPopulationParams standard();
};

struct PowerSystemParams {
    int machines = 3;
    Eigen::VectorXd H;    // inertia constants, s
    Eigen::VectorXd D;    // damping coefficients
    Eigen::VectorXd P_m;  // mechanical power, pu
    Eigen::VectorXd E;    // internal voltage magnitudes, pu
    Eigen::MatrixXd G;    // reduced conductance matrix (incl. diagonal)
    Eigen::MatrixXd B;    // reduced susceptance matrix (off-diagonal used)
    double omega0 = 2.0 * 3.14159265358979323846 * 60.0;
    static PowerSystemParams standard(); // classic 3-machine test case
};

DynamicalSystem make_pendulum(const PendulumParams& p = {});
DynamicalSystem make_planar_population(const PlanarPopulationParams& p = PlanarPopulationParams::standard());

/** Rotor dynamics in angle differences: state (phi12, phi13, w1, w2, w3)
 *  with phi1j = delta_1 - delta_j and w_i the speed deviation from
 *  synchronous. Only machines == 3 is supported. Inputs are torque
 *  perturbations added to each speed equation. */
DynamicalSystem build_phase_difference_model(const PowerSystemParams& p = PowerSystemParams::standard());

/** Linearization dx/dt = A (x - x_ss) + B u about a fixed point, in the
 *  original state coordinates. */
struct LinearizedModel {
    Eigen::VectorXd x_ss;
    Eigen::MatrixXd A, B;
};
LinearizedModel linearized_model(const DynamicalSystem& sys, const Eigen::VectorXd& x_ss);

/** Registry: "pendulum", "planar10", "ieee9bus". */
DynamicalSystem make_system(const std::string& name);

/** Reasonable fixed-point search start for a registry model. */
Eigen::VectorXd default_guess(const std::string& name);

/** Default scalar observable used for amplitude measurements:
 *  pendulum -> x1, planar10 -> mean of the x-coordinates, ieee9bus -> phi13. */
std::function<double(const Eigen::VectorXd&)> default_observable(const std::string& name);

} // namespace apr
