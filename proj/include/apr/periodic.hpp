#pragma once

#include "apr/dynsys.hpp"
#include "apr/ode.hpp"
#include "apr/spectral.hpp"

#include <complex>
#include <vector>

namespace apr {

/** One tracked Floquet mode of a forced periodic orbit, stored for the
 *  member of the conjugate pair with Im(kappa) matched by continuity from
 *  the seed. Sample matrices are n_theta x (N+1) over the uniform theta
 *  grid; the last column of g is identically zero (the augmented period
 *  map is block triangular). g may be empty when the mode's eigenfunction
 *  is not retained. E holds one column per family direction and is filled
 *  during family assembly. */
struct FloquetMode {
    int index = 0; // mode number at the fixed point (1, 3, ...)
    std::complex<double> kappa;
    int branch_m = 0;
    int anchor_index = 0;
    Eigen::MatrixXcd g;
    Eigen::MatrixXcd I;
    Eigen::MatrixXcd E;
};

/** Externally forced periodic orbit x_gamma(theta) with its driving input
 *  alpha(theta), sampled on theta_k = 2 pi k / n_theta. */
struct ForcedOrbit {
    Eigen::VectorXd q;          // family parameters (1 or 3 entries)
    Eigen::VectorXd theta_grid; // n_theta
    Eigen::MatrixXd x_gamma;    // n_theta x N
    Eigen::MatrixXd alpha;      // n_theta x N
    double omega = 0;
    double T = 0;

    std::vector<FloquetMode> modes;

    int n_theta() const { return int(theta_grid.size()); }
    int dim() const { return int(x_gamma.cols()); }
    const FloquetMode& mode(int index) const;
    FloquetMode& mode(int index);
    bool has_mode(int index) const;
};

/** Augmented monodromy data. Phi is the (N+1)x(N+1) period map of the
 *  system extended with the forcing clock; its last row is (0,...,0,1) by
 *  structure. state_mult / state_vecs / state_inv hold the eigen-data of
 *  the N x N state block (vectors unit-norm with canonical phase), and
 *  multipliers lists all N+1 multipliers with the trivial unit multiplier
 *  last. exponents are principal logarithms over T (trivial mode: 0). */
struct MonodromyResult {
    Eigen::MatrixXd Phi;
    Eigen::VectorXcd multipliers;
    Eigen::VectorXcd exponents;
    Eigen::VectorXcd state_mult;  // N, ordered desc Re(exponent), tie asc Im
    Eigen::MatrixXcd state_vecs;  // N x N
    Eigen::MatrixXcd state_inv;   // inverse of state_vecs
    Eigen::VectorXd X;            // forcing column of Phi (first N rows)

    /** Column of state_mult closest to exp(kappa*T); throws NumericalError
     *  when the match is ambiguous (multiplier collision). */
    int match(std::complex<double> kappa, double T) const;
};

struct ShootStats {
    int iterations = 0;
    std::vector<double> residuals;
};

inline OdeOptions orbit_ode_options() {
    OdeOptions o;
    o.rel_tol = 1e-10;
    o.abs_tol = 1e-12;
    return o;
}

/** Closed-form elliptical orbit and forcing for a small seed amplitude q0:
 *  the linear-mode ellipse driven so that the forced period is
 *  2 pi / (Im lambda + delta_omega). Requires delta_omega != 0 and
 *  -Im(lambda)/3 < delta_omega < Im(lambda). */
ForcedOrbit seed_orbit(const SpectralMode& mode, const Eigen::VectorXd& x_ss, double q0,
                       double delta_omega, int n_theta);

/** Newton shooting for the periodic solution of xdot = F(x,0) + alpha(t)
 *  with fixed period T. alpha and guess are n_theta x N sample matrices.
 *  Returns resampled orbit states on the theta grid. */
Eigen::MatrixXd refine_orbit(const DynamicalSystem& sys, const Eigen::MatrixXd& alpha,
                             const Eigen::MatrixXd& guess, double T, double tol = 1e-10,
                             const OdeOptions& ode = orbit_ode_options(),
                             ShootStats* stats = nullptr);

MonodromyResult monodromy(const DynamicalSystem& sys, const ForcedOrbit& orbit,
                          const OdeOptions& ode = orbit_ode_options());

/** Branch of log(mu)/T closest to kappa_ref along the imaginary axis. */
std::complex<double> match_exponent(std::complex<double> mu, double T,
                                    std::complex<double> kappa_ref);

/** Periodic eigenfunction g for exponent kappa: integrates the variational
 *  flow from the matching monodromy eigenvector, normalized to unit norm
 *  with arg(e_anchor^T g(0)) = -pi. Returns n_theta x (N+1) samples (last
 *  column zero). Throws NumericalError when the periodicity defect shows a
 *  multiplier collision. */
Eigen::MatrixXcd floquet_eigenfunction(const DynamicalSystem& sys, const ForcedOrbit& orbit,
                                       std::complex<double> kappa, const MonodromyResult& mon,
                                       int anchor_index,
                                       const OdeOptions& ode = orbit_ode_options());

/** Periodic adjoint gradient I for exponent kappa, scaled so that
 *  g(0)^T I(0) = 1 against the matching eigenfunction. n_theta x (N+1). */
Eigen::MatrixXcd floquet_gradient(const DynamicalSystem& sys, const ForcedOrbit& orbit,
                                  std::complex<double> kappa, const MonodromyResult& mon,
                                  const Eigen::MatrixXcd& g,
                                  const OdeOptions& ode = orbit_ode_options());

/** Phase gradient of the augmented system: the adjoint solution with
 *  multiplier one, normalized so F_aug^T Z = omega. n_theta x (N+1) real. */
Eigen::MatrixXd phase_gradient(const DynamicalSystem& sys, const ForcedOrbit& orbit,
                               const OdeOptions& ode = orbit_ode_options());

/** E entries for one mode: E_k(theta) = -I_1(theta)^T dxdq[k](theta),
 *  where dxdq[k] are n_theta x N derivative directions of the orbit with
 *  respect to family parameter k. */
Eigen::MatrixXcd sensitivity_E(const ForcedOrbit& orbit, int mode_index,
                               const std::vector<Eigen::MatrixXd>& dxdq);

/** Diagnostics used by invariants and tests. */
double biorthogonality_defect(const ForcedOrbit& orbit);
double phase_normalization_defect(const ForcedOrbit& orbit);
double shooting_residual(const DynamicalSystem& sys, const ForcedOrbit& orbit,
                         const OdeOptions& ode = orbit_ode_options());

} // namespace apr
