#pragma once

#include "apr/family.hpp"
#include "apr/spline.hpp"

#include <optional>
#include <vector>

namespace apr {

struct ReduceOptions {
    /** Floquet pair indices kept as explicit psi coordinates. Unset picks
     *  every tracked mode of the family except the continued pair(s). */
    std::optional<std::vector<int>> retained;
    /** Harmonics whose coefficients stay below this fraction of the
     *  largest one across the whole family are dropped from the tables. */
    double prune_rel = 1e-13;
    /** Fractional overhang past the family edges within which table
     *  queries extrapolate instead of throwing, so that integrator stages
     *  probing slightly past a boundary stay finite. */
    double range_margin = 0.05;
};

/** Point of the reduced phase space: phase, family parameters (1 or 3)
 *  and the retained Floquet coordinates (one entry per conjugate pair). */
struct ReducedState {
    double theta = 0;
    Eigen::VectorXd q;
    Eigen::VectorXcd psi;
};

struct ReducedDeriv {
    double theta_dot = 0;
    Eigen::VectorXd q_dot;
    Eigen::VectorXcd psi_dot;
    double f_theta = 0; // phase correction factor of the solve
};

enum class TerminationReason { completed, family_boundary, singularity };
const char* to_string(TerminationReason r);

/** Output of one simulation run, sampled on a uniform time grid. For
 *  reduced-model runs `reduced` carries the reduced states and `states`
 *  their reconstructions; full / linearized runs leave `reduced` empty.
 *  A run that leaves the family (or hits a singular solve) ends early
 *  with the reason and a human-readable note. */
struct SimulationTrace {
    std::vector<double> t;
    std::vector<ReducedState> reduced;
    Eigen::MatrixXd states; // one row per time stamp
    Eigen::MatrixXd inputs; // one row per time stamp
    TerminationReason termination = TerminationReason::completed;
    std::string note;
};

/** Phase-amplitude model interpolated from an orbit family: every
 *  theta-periodic quantity is stored as Fourier coefficients whose
 *  channels are interpolated across the family grid (cubic splines in q
 *  for one continued mode, local tensor cubics over the (q1,q2,q3)
 *  lattice for two), so values at family nodes reproduce the stored
 *  orbits. Immutable after build; safe to share across threads. */
class ReducedModel {
  public:
    ReducedModel() = default;

    /** Families whose orbits disagree in period (mid-build retunes) have
     *  no single smooth interpolant and are rejected with ConfigError. */
    static ReducedModel build(const DynamicalSystem& sys, const OrbitFamily& fam,
                              const ReduceOptions& opt = {});

    int n_params() const { return n_params_; }
    int dim_state() const { return sys_.dim_state; }
    int mode_count() const { return n_params_ == 1 ? 1 : 2; }
    const std::vector<int>& tracked() const { return mode_indices_; }
    const std::vector<int>& retained() const { return retained_; }
    const DynamicalSystem& system() const { return sys_; }
    const FamilyProvenance& provenance() const { return prov_; }

    Eigen::VectorXd q_lower() const;
    Eigen::VectorXd q_upper() const;
    /** Inside the family box, inflated by `margin` times the box width. */
    bool in_range(const Eigen::VectorXd& q, double margin = 0) const;

    double omega(const Eigen::VectorXd& q) const;
    std::complex<double> kappa(int mode_index, const Eigen::VectorXd& q) const;

    Eigen::VectorXd orbit_point(double theta, const Eigen::VectorXd& q) const;
    Eigen::VectorXd orbit_dtheta(double theta, const Eigen::VectorXd& q) const;
    /** d x_gamma / d q_k (spline derivative; finite differences on the
     *  two-mode lattice). */
    Eigen::VectorXd orbit_dq(int k, double theta, const Eigen::VectorXd& q) const;
    Eigen::VectorXd forcing_alpha(double theta, const Eigen::VectorXd& q) const;
    /** Floquet-coordinate gradient, N state entries plus the clock entry. */
    Eigen::VectorXcd mode_I(int mode_index, double theta, const Eigen::VectorXd& q) const;
    /** Sensitivity row against the family directions (n_params entries). */
    Eigen::VectorXcd mode_E(int mode_index, double theta, const Eigen::VectorXd& q) const;
    /** Eigenfunction state part (retained modes only). */
    Eigen::VectorXcd mode_g(int mode_index, double theta, const Eigen::VectorXd& q) const;

    /** All reduced-equation ingredients at one (theta, q), fetched with a
     *  single interpolation pass. I / E / kappa are per tracked slot
     *  (continued modes first, same order as tracked()); g per retained
     *  slot. */
    struct Ingredients {
        Eigen::VectorXd x_gamma;
        Eigen::VectorXd alpha;
        double omega = 0;
        std::vector<Eigen::VectorXcd> I; // N+1 entries each
        std::vector<Eigen::VectorXcd> E; // n_params entries each
        std::vector<std::complex<double>> kappa;
        std::vector<Eigen::VectorXcd> g_ret; // state part, per retained mode
    };
    void ingredients(double theta, const Eigen::VectorXd& q, Ingredients& out) const;

  private:
    struct Block {
        std::vector<int> ms; // retained harmonic indices
        int offset = 0;      // first channel in the packed vector
        int nc = 0;          // complex columns
        bool real = false;   // coefficients carry conjugate symmetry (m >= 0 stored)
    };

    void channels_at(const Eigen::VectorXd& q, Eigen::VectorXd& out) const;
    void channels_dq(int k, const Eigen::VectorXd& q, Eigen::VectorXd& out) const;
    void check_range(const Eigen::VectorXd& q) const;
    static void eval_block(const Eigen::VectorXd& C, const Block& b, double theta,
                           Eigen::VectorXcd& out, int deriv = 0);
    static void eval_block_real(const Eigen::VectorXd& C, const Block& b, double theta,
                                Eigen::VectorXd& out, int deriv = 0);
    int tracked_slot(int mode_index) const;
    int retained_slot(int mode_index) const;

    DynamicalSystem sys_;
    FamilyProvenance prov_;
    int n_params_ = 1;
    double range_margin_ = 0.05;
    std::vector<double> grid1_, grid2_, grid3_;
    std::vector<int> mode_indices_; // tracked modes, continued first
    std::vector<int> retained_;
    VectorSpline spline_;  // n_params == 1
    LocalCubic3 lattice_;  // n_params == 3
    Block b_x_, b_alpha_;
    std::vector<Block> b_I_, b_E_; // per tracked mode
    std::vector<Block> b_g_;       // per retained mode
    int off_omega_ = 0;
    std::vector<int> off_kappa_; // per tracked mode (2 channels each)
    int n_channels_ = 0;
};

/** U_e = F(x,u) - F(x,0) - alpha(q,theta): the part of the drive not
 *  accounted for by the family's own forcing. */
Eigen::VectorXd effective_input(const DynamicalSystem& sys, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u, const Eigen::VectorXd& q,
                                double theta, const ReducedModel& model);

/** Reduced vector field. (q_dot, f_theta) solve the algebraic condition
 *  that the continued pair's Floquet coordinate decays freely; retained
 *  psi follow their full linearized dynamics. U_e is evaluated at the
 *  reconstructed state. Throws SingularityError when the solve loses
 *  rank, FamilyRangeError far outside the family box. */
ReducedDeriv reduced_rhs(const ReducedModel& m, const ReducedState& s, const Eigen::VectorXd& u);

/** Two-continued-mode variant of the solve (4x4); dispatched to
 *  automatically by reduced_rhs for three-parameter models. */
ReducedDeriv reduced_rhs_two_mode(const ReducedModel& m, const ReducedState& s,
                                  const Eigen::VectorXd& u);

/** x = x_gamma(theta, q) plus the retained-pair contributions
 *  2 Re(psi_j g_j). */
Eigen::VectorXd reconstruct_state(const ReducedModel& m, const ReducedState& s);

struct LiftOptions {
    int theta_scan = 96;      // coarse scan resolution around the family
    int refine_iters = 40;
    /** Accept only when the residual distance stays below this fraction
     *  of the matched orbit's own amplitude (plus a small absolute
     *  floor). */
    double neighborhood_rel = 0.75;
};

/** Nearest point of the family to a full state: grid scan plus
 *  Gauss-Newton polish of (theta, q), then psi from the gradient
 *  projections. Throws FamilyRangeError when x is too far from the
 *  family tube. */
ReducedState lift_state(const ReducedModel& m, const Eigen::VectorXd& x,
                        const LiftOptions& opt = {});

} // namespace apr
