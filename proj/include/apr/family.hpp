#pragma once

#include "apr/periodic.hpp"

#include <string>
#include <vector>

namespace apr {

/** Record of one forcing-frequency shift applied during continuation. */
struct RetuneEvent {
    double q = 0;
    double delta_omega = 0; // omega_after - omega_before
    double T_before = 0;
    double T_after = 0;
};

struct FamilyOptions {
    double q0 = 1e-3;        // first nonzero amplitude
    double q_max = 1.0;      // target amplitude of the continuation
    double delta_q0 = 1e-3;  // initial continuation step
    double delta_q_max = 0.05;
    double delta_q_min = 1e-7;
    double delta_omega = 0;  // forcing detuning; 0 -> 0.1 * Im(lambda)
    int n_theta = 256;
    int mode_index = 1;           // continued oscillatory pair (1, 3, ...)
    std::vector<int> extra_modes; // additional tracked pairs, e.g. {3}
    int anchor_index = -1;        // -1 -> largest eigenvector component
    double shoot_tol = 1e-10;
    OdeOptions ode = orbit_ode_options();
    int max_orbits = 4000;
    /** Multiplier-pair angle (radians) below which the continuation signals
     *  a collision: near the positive real axis a retune is suggested, near
     *  the negative real axis the family terminates. */
    double collision_angle = 0.05;
    /** Half-width (radians) of the blackout zone around the negative real
     *  axis of the multiplier plane. Orbits whose pair angle falls inside it
     *  are never stored: the eigen-decomposition of the period map is
     *  ill-conditioned there, and feeding its eigenvectors back into the
     *  continuation destabilizes the family. The builder instead crosses the
     *  zone in shooting-only sub-steps and resumes analysis on the far
     *  side. */
    double crossing_band = 0.3;
    bool auto_retune = false;
    int max_retunes = 6;
    /** Relative tolerance for the per-orbit biorthogonality and phase
     *  normalization checks run on every accepted orbit. */
    double invariant_tol = 1e-6;
};

struct FamilyProvenance {
    std::string model;
    int mode_index = 1;
    double q0 = 0;
    double delta_omega = 0;
    int n_theta = 0;
    int anchor_index = -1;
    double shoot_tol = 0;
    double ode_rel = 0;
    double ode_abs = 0;
    double invariant_tol = 1e-6;
    std::vector<int> tracked_modes;
    std::vector<RetuneEvent> retunes;
    std::string boundary_note;
    std::complex<double> lambda1; // fixed-point eigenvalue of the continued pair
    Eigen::VectorXd x_ss;
};

/** Family of forced periodic orbits around a stable fixed point. For
 *  mode_count == 1 the orbits vector is indexed by q_grid (ascending,
 *  starting at the analytic q = 0 limit). For mode_count == 2 it is a
 *  dense lattice over (q1, q2, q3) flattened as
 *  i1 * n2 * n3 + i2 * n3 + i3. */
struct OrbitFamily {
    int mode_count = 1;
    std::vector<double> q_grid;
    std::vector<double> q2_grid;
    std::vector<double> q3_grid;
    std::vector<ForcedOrbit> orbits;
    FamilyProvenance prov;
    bool hit_boundary = false;
    double terminal_q = 0;

    int n1() const { return int(q_grid.size()); }
    int n2() const { return int(q2_grid.size()); }
    int n3() const { return int(q3_grid.size()); }
    const ForcedOrbit& at(int i1) const { return orbits[size_t(i1)]; }
    const ForcedOrbit& at(int i1, int i2, int i3) const {
        return orbits[size_t((i1 * n2() + i2) * n3() + i3)];
    }
    ForcedOrbit& at(int i1) { return orbits[size_t(i1)]; }
    ForcedOrbit& at(int i1, int i2, int i3) {
        return orbits[size_t((i1 * n2() + i2) * n3() + i3)];
    }
    double q_tip() const { return q_grid.empty() ? 0.0 : q_grid.back(); }
};

struct BackboneCurve {
    std::vector<double> q;
    std::vector<double> omega_bar;  // effective (input-free) frequency
    std::vector<double> amplitude;  // peak-to-peak range of the observable
    std::vector<std::vector<std::complex<double>>> kappa; // per tracked mode
};

struct TwoModeOptions {
    double q2_max = 3.0;
    double delta_q2 = 0.5;
    double q3_max = 3.0;
    double delta_q3 = 0.5;
    int n_theta = 48;
    /** Minimum spacing when thinning the base q1 grid for the lattice. */
    double q1_spacing = 0.15;
    double shoot_tol = 1e-10;
    OdeOptions ode = orbit_ode_options();
    double invariant_tol = 1e-6;
};

/** Seeds at options.q0 (preceded by the exact q = 0 limit orbit) and
 *  continues toward q_max with adaptive steps. Stops early with
 *  hit_boundary set when the principal multiplier pair collides on the
 *  real axis or the shooting stops converging at the minimum step. */
OrbitFamily build_family(const DynamicalSystem& sys, const FamilyOptions& opt);

/** Appends one orbit at q_tip + delta_q. Throws FamilyBoundaryError /
 *  RetuneNeededError on the corresponding termination signals. */
void extend_family(OrbitFamily& fam, const DynamicalSystem& sys, double delta_q,
                   const FamilyOptions& opt, ShootStats* stats = nullptr);

/** Changes the forcing frequency of the family tip by delta_omega while
 *  keeping the orbit's spatial samples: alpha picks up delta_omega *
 *  dx/dtheta, the period becomes 2 pi / (omega + delta_omega), and the
 *  Floquet data is recomputed (exponent branches follow the analytic
 *  first-order shift -i * delta_omega of the continued pair). Later
 *  extensions inherit the new period. */
void retune_period(OrbitFamily& fam, const DynamicalSystem& sys, double delta_omega);

/** Input-free average rotation rate on the orbit: omega plus the mean of
 *  omega * Im(I_1^T alpha) / Im(I_clock) over theta. The q = 0 limit is
 *  Im(lambda1) (passed by the caller since the ratio degenerates there). */
double effective_frequency(const ForcedOrbit& orbit, double lambda1_im);

/** Per-orbit backbone data for a scalar observable of the state. */
BackboneCurve backbone(const OrbitFamily& fam,
                       const std::function<double(const Eigen::VectorXd&)>& observable);

/** Extends a one-parameter family (tracking modes 1 and j2) to a dense
 *  (q1, q2, q3) lattice: per retained q1 node the orbit is continued along
 *  2 Re(g_j2) and -2 Im(g_j2). Lattice orbits are resampled to the
 *  (coarser) lattice n_theta to bound memory; the (q2, q3) = (0, 0) plane
 *  carries exactly the base family's orbits. */
OrbitFamily extend_family_two_mode(const OrbitFamily& base, const DynamicalSystem& sys,
                                   const TwoModeOptions& opt);

/** Largest biorthogonality / phase-normalization / closure defect over the
 *  family (used by tests and the acceptance harness). */
struct FamilyDefects {
    double biorthogonality = 0;
    double phase_normalization = 0;
    double shooting = 0;
};
FamilyDefects family_defects(const DynamicalSystem& sys, const OrbitFamily& fam,
                             bool include_shooting = false);

} // namespace apr
