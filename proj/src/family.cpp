#include "apr/family.hpp"

#include "apr/errors.hpp"
#include "apr/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace apr {

namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cplx = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;

VectorXd uniform_theta(int n) {
    VectorXd th(n);
    for (int k = 0; k < n; ++k) th[k] = 2.0 * kPi * k / n;
    return th;
}

/** Samples of d/dtheta for periodic samples (rows over the uniform grid). */
MatrixXcd dtheta_samples(const MatrixXcd& s) {
    const FourierInterp d = FourierInterp::fit(s).derivative();
    MatrixXcd out(s.rows(), s.cols());
    const int n = int(s.rows());
    for (int k = 0; k < n; ++k) out.row(k) = d.eval(2.0 * kPi * k / n).transpose();
    return out;
}

MatrixXd dtheta_samples_real(const MatrixXd& s) {
    return dtheta_samples(s.cast<cplx>()).real();
}

/** Continued-mode references used when rebuilding Floquet data. The branch
 *  integer is inherited along the family (branch continuity). */
struct ModeRef {
    int index = 0;
    cplx kappa_ref;
    int branch_m = 0;
    int anchor = 0;
};

std::vector<ModeRef> refs_from(const ForcedOrbit& src) {
    std::vector<ModeRef> refs;
    for (const auto& m : src.modes) refs.push_back({m.index, m.kappa, m.branch_m, m.anchor_index});
    return refs;
}

/** Mode references for a step of delta_q beyond the family tip, with the
 *  exponents extrapolated from the last two orbits (secant). Plain tip
 *  references are a poor matching target across larger steps: when the pair
 *  angle passes an axis of the multiplier plane, the nearest multiplier to
 *  the stale target is the conjugate partner and the branch would bounce
 *  back instead of passing through. */
std::vector<ModeRef> refs_extrapolated(const OrbitFamily& fam, double delta_q) {
    const ForcedOrbit& o2 = fam.orbits.back();
    auto refs = refs_from(o2);
    if (fam.orbits.size() < 2) return refs;
    const ForcedOrbit& o1 = fam.orbits[fam.orbits.size() - 2];
    const double dq = o2.q[0] - o1.q[0];
    if (dq <= 0 || std::abs(o1.T - o2.T) > 1e-12 * o2.T || o1.modes.size() != o2.modes.size())
        return refs; // across a retune (T changed) fall back to plain references
    for (size_t m = 0; m < refs.size(); ++m)
        refs[m].kappa_ref += (o2.modes[m].kappa - o1.modes[m].kappa) * (delta_q / dq);
    return refs;
}

/** Recomputes kappa/g/I (and E for the given family directions) for every
 *  mode in refs, checking the orbit-level invariants. */
void analyze_orbit(const DynamicalSystem& sys, ForcedOrbit& orbit,
                   const std::vector<ModeRef>& refs, const OdeOptions& ode,
                   double invariant_tol, const MonodromyResult& mon) {
    orbit.modes.clear();
    for (const auto& ref : refs) {
        const int col = mon.match(ref.kappa_ref, orbit.T);
        const cplx mu = mon.state_mult[col];
        if (std::abs(mu.imag()) < 1e-12 * std::abs(mu)) {
            std::ostringstream os;
            os << "tracked multiplier has become real at q = " << orbit.q.transpose()
               << " (mu = " << mu << ")";
            throw NumericalError(os.str());
        }
        const cplx kappa = match_exponent(mu, orbit.T, ref.kappa_ref);
        FloquetMode mode;
        mode.index = ref.index;
        mode.kappa = kappa;
        mode.branch_m = ref.branch_m;
        mode.anchor_index = ref.anchor;
        mode.g = floquet_eigenfunction(sys, orbit, kappa, mon, ref.anchor, ode);
        mode.I = floquet_gradient(sys, orbit, kappa, mon, mode.g, ode);
        orbit.modes.push_back(std::move(mode));
    }
    const int N = orbit.dim();
    std::vector<MatrixXd> dirs;
    dirs.push_back(2.0 * orbit.modes.front().g.leftCols(N).real());
    for (auto& m : orbit.modes) m.E = sensitivity_E(orbit, m.index, dirs);

    const double biorth = biorthogonality_defect(orbit);
    const double norm_defect = phase_normalization_defect(orbit);
    if (biorth > invariant_tol || norm_defect > invariant_tol) {
        std::ostringstream os;
        os << "orbit invariants violated at q = " << orbit.q.transpose()
           << " (biorthogonality " << biorth << ", phase normalization " << norm_defect
           << ", tolerance " << invariant_tol << ")";
        throw NumericalError(os.str());
    }
}

/** Collision monitoring of the continued pair.
 *
 *  Positive real axis: the pair meets its own conjugate there (the orbit's
 *  Floquet rotation number reaches zero). Retuning the forcing period
 *  cannot separate a pair from itself -- the multiplier angle of a given
 *  orbit is invariant under a retune to first order -- so this is a genuine
 *  family boundary.
 *
 *  Negative real axis: not signalled here. For odd-symmetric systems the
 *  period map is a perfect square and the pair passes straight through (a
 *  semisimple double point); the builder hops the surrounding blackout
 *  zone, and a genuine real segment surfaces as a boundary when the
 *  landing analysis keeps failing.
 *
 *  A multiplier from outside the pair approaching it IS retunable: a
 *  period change moves distinct Floquet branches at different angular
 *  rates. */
void check_collision_signals(const MonodromyResult& mon, const std::vector<ModeRef>& refs,
                             double T, double omega, double q_new, double collision_angle) {
    // Plain nearest-multiplier match: the throwing MonodromyResult::match is
    // ambiguous exactly in the collision situations monitored here.
    const cplx target = std::exp(refs.front().kappa_ref * T);
    int col1 = 0;
    for (int k = 1; k < mon.state_mult.size(); ++k)
        if (std::abs(mon.state_mult[k] - target) < std::abs(mon.state_mult[col1] - target))
            col1 = k;
    const cplx mu1 = mon.state_mult[col1];
    const double angle = std::arg(mu1);
    if (std::abs(angle) < collision_angle) {
        std::ostringstream os;
        os << "the continued pair's Floquet rotation number reaches zero at q = " << q_new
           << " (multiplier angle " << angle
           << "): the pair meets the positive real axis and turns real";
        throw FamilyBoundaryError(os.str(), q_new);
    }
    // The partner slot: nearest to the conjugate target. Identified by
    // position rather than by exact conjugacy so that a thin real-split of
    // the pair (possible while traversing the negative real axis) is not
    // mistaken for a foreign multiplier.
    int col1c = col1 == 0 ? 1 : 0;
    for (int k = 0; k < mon.state_mult.size(); ++k) {
        if (k == col1) continue;
        if (std::abs(mon.state_mult[k] - std::conj(target)) <
            std::abs(mon.state_mult[col1c] - std::conj(target)))
            col1c = k;
    }
    for (int k = 0; k < mon.state_mult.size(); ++k) {
        if (k == col1 || k == col1c) continue;
        const cplx mu_k = mon.state_mult[k];
        const double gap = std::min(std::abs(mu_k - mu1), std::abs(mu_k - std::conj(mu1)));
        if (gap < collision_angle * std::abs(mu1)) {
            // Branch separation under a period change is proportional to the
            // difference of unreduced frequencies; a mode-spacing of order
            // omega/2 gives this order-of-magnitude suggestion for opening
            // about three collision margins.
            const double suggested = 3.0 * collision_angle * omega / kPi;
            std::ostringstream os;
            os << "multiplier " << k << " approaches the continued pair at q = " << q_new
               << " (gap " << gap << "); shift the forcing frequency to separate the branches";
            throw RetuneNeededError(os.str(), q_new, suggested);
        }
    }
}

/** Angle of the continued pair's multiplier at the family tip (diagnostic
 *  for the step controller's crossing handling). */
double tip_multiplier_angle(const ForcedOrbit& tip) {
    return tip.modes.front().kappa.imag() * tip.T; // continuous branch, not wrapped
}

/** Exact small-amplitude limit of the family: the fixed point itself with
 *  the linear-mode eigenfunctions. */
ForcedOrbit zero_orbit(const VectorXd& x_ss, double omega, int n_theta,
                       const std::vector<SpectralMode>& tracked,
                       const std::vector<int>& indices) {
    const int N = int(x_ss.size());
    ForcedOrbit orb;
    orb.q = VectorXd::Zero(1);
    orb.theta_grid = uniform_theta(n_theta);
    orb.x_gamma = x_ss.transpose().replicate(n_theta, 1);
    orb.alpha = MatrixXd::Zero(n_theta, N);
    orb.omega = omega;
    orb.T = 2.0 * kPi / omega;
    for (size_t t = 0; t < tracked.size(); ++t) {
        const auto& sm = tracked[t];
        const int m_rot = (t == 0) ? 1 : std::max(1, int(std::lround(sm.lambda.imag() / omega)));
        FloquetMode mode;
        mode.index = indices[t];
        mode.kappa = sm.lambda - cplx(0.0, m_rot * omega);
        mode.branch_m = m_rot;
        mode.anchor_index = sm.anchor_index;
        mode.g = MatrixXcd::Zero(n_theta, N + 1);
        mode.I = MatrixXcd::Zero(n_theta, N + 1);
        for (int k = 0; k < n_theta; ++k) {
            const double th = orb.theta_grid[k];
            const cplx rot = std::exp(cplx(0.0, m_rot * th));
            mode.g.row(k).head(N) = (sm.v * rot).transpose();
            mode.I.row(k).head(N) = (sm.w.conjugate() / rot).transpose();
        }
        mode.E = MatrixXcd::Zero(n_theta, 1);
        if (t == 0) mode.E.col(0).setConstant(cplx(-1.0, 0.0));
        orb.modes.push_back(std::move(mode));
    }
    return orb;
}

/** Continuation predictor along a complex eigenfunction direction:
 *  x += step * dir_g applied to the state samples, with the matching
 *  forcing update alpha += step * (d/dt dir_g - J dir_g). dir(g) is
 *  either 2 Re g or -2 Im g. */
void predict_step(const DynamicalSystem& sys, const ForcedOrbit& src, double step,
                  const MatrixXd& dir, MatrixXd& x_out, MatrixXd& alpha_out) {
    const int n = src.n_theta();
    const MatrixXd ddir = src.omega * dtheta_samples_real(dir);
    x_out = src.x_gamma + step * dir;
    alpha_out = src.alpha;
    const VectorXd u0 = VectorXd::Zero(sys.dim_input);
    for (int k = 0; k < n; ++k) {
        const MatrixXd J = sys.eval_jac_state(src.x_gamma.row(k).transpose(), u0);
        alpha_out.row(k) += step * (ddir.row(k) - (J * dir.row(k).transpose()).transpose());
    }
}

ForcedOrbit continue_orbit(const DynamicalSystem& sys, const ForcedOrbit& src,
                           const VectorXd& q_new, double step, const MatrixXd& dir,
                           double shoot_tol, const OdeOptions& ode, double invariant_tol,
                           ShootStats* stats, double collision_angle = -1.0,
                           const std::vector<ModeRef>* refs_override = nullptr) {
    ForcedOrbit orb;
    orb.q = q_new;
    orb.theta_grid = src.theta_grid;
    orb.omega = src.omega;
    orb.T = src.T;
    predict_step(sys, src, step, dir, orb.x_gamma, orb.alpha);
    ShootStats local;
    orb.x_gamma = refine_orbit(sys, orb.alpha, orb.x_gamma, orb.T, shoot_tol, ode, &local);
    if (stats) *stats = local;
    const MonodromyResult mon = monodromy(sys, orb, ode);
    const auto refs = refs_override ? *refs_override : refs_from(src);
    if (collision_angle > 0)
        check_collision_signals(mon, refs, orb.T, orb.omega, q_new[0], collision_angle);
    analyze_orbit(sys, orb, refs, ode, invariant_tol, mon);
    return orb;
}

/** Advance an orbit by delta_q in shooting-only sub-steps with the predictor
 *  direction frozen at the start orbit. No Floquet analysis is run, so the
 *  chain traverses regions where the period-map eigen-decomposition is
 *  unusable; the returned orbit carries no mode data. */
ForcedOrbit shooting_chain(const DynamicalSystem& sys, const ForcedOrbit& start,
                           const MatrixXd& dir, double delta_q, int n_sub, double shoot_tol,
                           const OdeOptions& ode) {
    ForcedOrbit cur = start;
    cur.modes.clear();
    const double sub = delta_q / n_sub;
    for (int k = 0; k < n_sub; ++k) {
        ForcedOrbit nxt;
        nxt.q = cur.q;
        nxt.q[0] += sub;
        nxt.theta_grid = cur.theta_grid;
        nxt.omega = cur.omega;
        nxt.T = cur.T;
        predict_step(sys, cur, sub, dir, nxt.x_gamma, nxt.alpha);
        nxt.x_gamma = refine_orbit(sys, nxt.alpha, nxt.x_gamma, nxt.T, shoot_tol, ode, nullptr);
        cur = std::move(nxt);
    }
    return cur;
}

/** Cross the blackout zone around the negative real axis in one hop of
 *  delta_q past the family tip, then analyze the landing orbit against
 *  secant-extrapolated mode references. Retries with a finer shooting chain
 *  before giving up. */
ForcedOrbit hop_across_axis(const DynamicalSystem& sys, const OrbitFamily& fam, double delta_q,
                            const FamilyOptions& opt) {
    const ForcedOrbit& tip = fam.orbits.back();
    const int N = tip.dim();
    const MatrixXd dir = 2.0 * tip.modes.front().g.leftCols(N).real();
    const auto refs = refs_extrapolated(fam, delta_q);
    int n_sub = std::max(1, int(std::ceil(delta_q / opt.delta_q_max)));
    std::string last_err;
    for (int attempt = 0; attempt < 3; ++attempt, n_sub *= 2) {
        try {
            ForcedOrbit landing =
                shooting_chain(sys, tip, dir, delta_q, n_sub, opt.shoot_tol, opt.ode);
            const MonodromyResult mon = monodromy(sys, landing, opt.ode);
            check_collision_signals(mon, refs, landing.T, landing.omega, landing.q[0],
                                    opt.collision_angle);
            analyze_orbit(sys, landing, refs, opt.ode, opt.invariant_tol, mon);
            return landing;
        } catch (const NumericalError& e) {
            last_err = e.what();
        }
    }
    throw NumericalError(last_err);
}

ForcedOrbit resample_orbit(const ForcedOrbit& src, int n_new) {
    if (n_new == src.n_theta()) return src;
    ForcedOrbit out;
    out.q = src.q;
    out.theta_grid = uniform_theta(n_new);
    out.omega = src.omega;
    out.T = src.T;
    auto resample_real = [&](const MatrixXd& s) {
        const FourierInterp f = FourierInterp::fit(s);
        MatrixXd r(n_new, s.cols());
        for (int k = 0; k < n_new; ++k) r.row(k) = f.eval_real(out.theta_grid[k]).transpose();
        return r;
    };
    auto resample_cplx = [&](const MatrixXcd& s) {
        if (s.size() == 0) return MatrixXcd(0, 0);
        const FourierInterp f = FourierInterp::fit(s);
        MatrixXcd r(n_new, s.cols());
        for (int k = 0; k < n_new; ++k) r.row(k) = f.eval(out.theta_grid[k]).transpose();
        return r;
    };
    out.x_gamma = resample_real(src.x_gamma);
    out.alpha = resample_real(src.alpha);
    for (const auto& m : src.modes) {
        FloquetMode mm;
        mm.index = m.index;
        mm.kappa = m.kappa;
        mm.branch_m = m.branch_m;
        mm.anchor_index = m.anchor_index;
        mm.g = resample_cplx(m.g);
        mm.I = resample_cplx(m.I);
        mm.E = resample_cplx(m.E);
        out.modes.push_back(std::move(mm));
    }
    return out;
}

} // namespace

void extend_family(OrbitFamily& fam, const DynamicalSystem& sys, double delta_q,
                   const FamilyOptions& opt, ShootStats* stats) {
    if (fam.mode_count != 1) throw ConfigError("extend_family requires a one-parameter family");
    if (fam.orbits.empty()) throw ConfigError("extend_family: empty family");
    const ForcedOrbit& tip = fam.orbits.back();
    const int N = tip.dim();
    const MatrixXd dir = 2.0 * tip.modes.front().g.leftCols(N).real();
    VectorXd q_new(1);
    q_new[0] = tip.q[0] + delta_q;
    const auto refs = refs_extrapolated(fam, delta_q);
    ForcedOrbit orb = continue_orbit(sys, tip, q_new, delta_q, dir, opt.shoot_tol, opt.ode,
                                     opt.invariant_tol, stats, opt.collision_angle, &refs);
    fam.orbits.push_back(std::move(orb));
    fam.q_grid.push_back(q_new[0]);
    fam.terminal_q = q_new[0];
}

OrbitFamily build_family(const DynamicalSystem& sys, const FamilyOptions& opt) {
    OrbitFamily fam;
    fam.mode_count = 1;

    const VectorXd x_ss = find_fixed_point(sys, default_guess(sys.name));
    const MatrixXd A = sys.eval_jac_state(x_ss, VectorXd::Zero(sys.dim_input));
    const Spectrum sp = compute_spectrum(A);

    std::vector<int> indices;
    indices.push_back(opt.mode_index);
    for (int j : opt.extra_modes) indices.push_back(j);
    std::vector<SpectralMode> tracked;
    for (size_t t = 0; t < indices.size(); ++t) {
        // Coordinates are numbered through the conjugate pairs, so the
        // usable indices are the odd ones: 1 is the first oscillatory
        // pair, 3 the second, and so on.
        if (indices[t] < 1 || indices[t] % 2 == 0)
            throw ConfigError("mode index " + std::to_string(indices[t]) +
                              " does not name a conjugate pair (use 1, 3, 5, ...)");
        const int pair = (indices[t] + 1) / 2;
        tracked.push_back(oscillatory_mode(sp, pair, t == 0 ? opt.anchor_index : -1));
    }

    const double im1 = tracked.front().lambda.imag();
    double dw = opt.delta_omega;
    if (dw == 0) dw = 0.1 * im1;
    if (dw == 0 || dw <= -im1 / 3.0 || dw >= im1) {
        std::ostringstream os;
        os << "forcing detuning " << dw << " outside the admissible range (-"
           << im1 / 3.0 << ", " << im1 << ") \\ {0}";
        throw ConfigError(os.str());
    }
    const double omega = im1 + dw;

    fam.prov.model = sys.name;
    fam.prov.mode_index = opt.mode_index;
    fam.prov.q0 = opt.q0;
    fam.prov.delta_omega = dw;
    fam.prov.n_theta = opt.n_theta;
    fam.prov.anchor_index = tracked.front().anchor_index;
    fam.prov.shoot_tol = opt.shoot_tol;
    fam.prov.ode_rel = opt.ode.rel_tol;
    fam.prov.ode_abs = opt.ode.abs_tol;
    fam.prov.invariant_tol = opt.invariant_tol;
    fam.prov.tracked_modes = indices;
    fam.prov.lambda1 = tracked.front().lambda;
    fam.prov.x_ss = x_ss;

    fam.orbits.push_back(zero_orbit(x_ss, omega, opt.n_theta, tracked, indices));
    fam.q_grid.push_back(0.0);

    double dq = std::min(opt.delta_q0, opt.q0);
    double next_q = opt.q0;
    int easy = 0;
    int retunes = 0;
    // Returns true when the signal was absorbed by an automatic retune and
    // the continuation should go on; records the boundary otherwise.
    auto handle_retune = [&](const RetuneNeededError& e) -> bool {
        if (opt.auto_retune && retunes < opt.max_retunes) {
            retune_period(fam, sys, e.suggested_delta_omega);
            ++retunes;
            return true;
        }
        fam.hit_boundary = true;
        fam.terminal_q = fam.q_tip();
        fam.prov.boundary_note =
            std::string(e.what()) + " [stopped: automatic retuning disabled]";
        return false;
    };

    double q_limit = opt.q_max;
    while (fam.q_tip() < q_limit - 1e-12 && int(fam.orbits.size()) < opt.max_orbits) {
        double step = std::min(next_q - fam.q_tip(), q_limit - fam.q_tip());

        // Blackout-zone guard: when the planned step would land the pair
        // angle inside the zone around an odd multiple of pi (the negative
        // real axis of the multiplier plane), enlarge the step into a hop
        // that crosses to the far side. A protected crossing (odd-symmetric
        // system) passes; a genuine real-multiplier segment surfaces as a
        // boundary when the landing analysis keeps failing.
        double hop = 0, dist = -1, rate = 0;
        if (fam.orbits.size() >= 2) {
            const ForcedOrbit& o2 = fam.orbits.back();
            const ForcedOrbit& o1 = fam.orbits[fam.orbits.size() - 2];
            if (std::abs(o1.T - o2.T) <= 1e-12 * o2.T) {
                const double a2 = tip_multiplier_angle(o2);
                rate = (a2 - tip_multiplier_angle(o1)) / (o2.q[0] - o1.q[0]);
                if (std::abs(rate) > 1e-9) {
                    const double s = rate > 0 ? 1.0 : -1.0;
                    const double u = (a2 / kPi - 1.0) / 2.0;
                    const double k_ahead =
                        s > 0 ? std::ceil(u + 1e-12) : std::floor(u - 1e-12);
                    const double axis = kPi * (2.0 * k_ahead + 1.0);
                    dist = s * (axis - a2);
                    const double land = dist - std::abs(rate) * step;
                    if (std::abs(land) < opt.crossing_band || dist < opt.crossing_band)
                        hop = (dist + 1.25 * opt.crossing_band) / std::abs(rate);
                    if (hop > 64 * opt.delta_q_max) hop = 0; // angle barely moving: no hop
                }
            }
        }
        if (hop > 0 && fam.q_tip() + hop > q_limit - 1e-12) {
            // The requested range ends inside the blackout zone: finish the
            // normal march up to the zone's near edge and stop there.
            q_limit = fam.q_tip() + std::max(0.0, dist - opt.crossing_band) / std::abs(rate);
            if (fam.q_tip() >= q_limit - 1e-12) {
                fam.hit_boundary = true;
                fam.terminal_q = fam.q_tip();
                fam.prov.boundary_note =
                    "stopped at the edge of the multiplier-axis blackout zone: the "
                    "requested amplitude range ends inside it";
                break;
            }
            continue;
        }
        if (hop > 0) {
            if (std::getenv("APR_FAMILY_TRACE"))
                std::fprintf(stderr, "[family] hop %.4g from q=%.6f (dist %.3f rate %.3f)\n",
                             hop, fam.q_tip(), dist, rate);
            try {
                ForcedOrbit landing = hop_across_axis(sys, fam, hop, opt);
                fam.q_grid.push_back(landing.q[0]);
                fam.orbits.push_back(std::move(landing));
                fam.terminal_q = fam.q_tip();
                easy = 0;
                next_q = fam.q_tip() + dq;
                continue;
            } catch (const FamilyBoundaryError& e) {
                fam.hit_boundary = true;
                fam.terminal_q = fam.q_tip();
                fam.prov.boundary_note = e.what();
                break;
            } catch (const RetuneNeededError& e) {
                if (handle_retune(e)) continue;
                break;
            } catch (const NumericalError& e) {
                fam.hit_boundary = true;
                fam.terminal_q = fam.q_tip();
                std::ostringstream os;
                os << "the multiplier pair does not return to a complex-conjugate pair "
                      "beyond the real-axis segment entered near q = "
                   << fam.q_tip() + dist / std::abs(rate) << ": " << e.what();
                fam.prov.boundary_note = os.str();
                break;
            }
        }

        ShootStats stats;
        try {
            extend_family(fam, sys, step, opt, &stats);
        } catch (const FamilyBoundaryError& e) {
            fam.hit_boundary = true;
            fam.terminal_q = fam.q_tip();
            fam.prov.boundary_note = e.what();
            break;
        } catch (const RetuneNeededError& e) {
            if (handle_retune(e)) continue;
            break;
        } catch (const NumericalError& e) {
            if (std::getenv("APR_FAMILY_TRACE"))
                std::fprintf(stderr, "[family] fail q=%.6f step=%.3g: %s\n",
                             fam.q_tip() + step, step, e.what());
            dq *= 0.5;
            if (dq < opt.delta_q_min) {
                fam.hit_boundary = true;
                fam.terminal_q = fam.q_tip();
                fam.prov.boundary_note =
                    std::string("continuation stalled at the minimum step: ") + e.what();
                break;
            }
            next_q = fam.q_tip() + dq;
            easy = 0;
            continue;
        }
        if (stats.iterations <= 4) {
            if (++easy >= 3) {
                dq = std::min(2.0 * dq, opt.delta_q_max);
                easy = 0;
            }
        } else if (stats.iterations >= 8) {
            dq = std::max(0.5 * dq, opt.delta_q_min);
            easy = 0;
        }
        next_q = fam.q_tip() + dq;
    }
    if (!fam.hit_boundary) fam.terminal_q = fam.q_tip();
    return fam;
}

void retune_period(OrbitFamily& fam, const DynamicalSystem& sys, double delta_omega) {
    if (fam.orbits.empty()) throw ConfigError("retune_period: empty family");
    ForcedOrbit& tip = fam.orbits.back();
    if (tip.q[0] == 0.0)
        throw ConfigError("retune_period: the q = 0 limit orbit has no forcing to retune");
    const double omega_new = tip.omega + delta_omega;
    if (omega_new <= 0) throw ConfigError("retune_period: shifted frequency is not positive");
    const double T_old = tip.T;
    const double T_new = 2.0 * kPi / omega_new;

    ForcedOrbit orb;
    orb.q = tip.q;
    orb.theta_grid = tip.theta_grid;
    orb.omega = omega_new;
    orb.T = T_new;
    const MatrixXd dxdth = dtheta_samples_real(tip.x_gamma);
    orb.alpha = tip.alpha + delta_omega * dxdth;
    orb.x_gamma = refine_orbit(sys, orb.alpha, tip.x_gamma, T_new, fam.prov.shoot_tol,
                               orbit_ode_options());

    // First-order exponent shift under a period change: 2 pi m dT / T^2
    // per winding number m, applied to the matching references.
    std::vector<ModeRef> refs;
    for (const auto& m : tip.modes) {
        const cplx shift(0.0, 2.0 * kPi * m.branch_m * (T_new - T_old) / (T_old * T_old));
        refs.push_back({m.index, m.kappa + shift, m.branch_m, m.anchor_index});
    }
    OdeOptions ode = orbit_ode_options();
    ode.rel_tol = fam.prov.ode_rel;
    ode.abs_tol = fam.prov.ode_abs;
    const MonodromyResult mon = monodromy(sys, orb, ode);
    analyze_orbit(sys, orb, refs, ode, fam.prov.invariant_tol, mon);

    RetuneEvent ev;
    ev.q = tip.q[0];
    ev.delta_omega = delta_omega;
    ev.T_before = T_old;
    ev.T_after = T_new;
    fam.prov.retunes.push_back(ev);
    tip = std::move(orb);
}

double effective_frequency(const ForcedOrbit& orbit, double lambda1_im) {
    if (orbit.q.size() > 0 && orbit.q[0] == 0.0) return lambda1_im;
    const FloquetMode& m1 = orbit.modes.front(); // continued pair
    const int n = orbit.n_theta();
    const int N = orbit.dim();
    double acc = 0;
    for (int k = 0; k < n; ++k) {
        const double im_clock = m1.I(k, N).imag();
        if (std::abs(im_clock) < 1e-14) {
            std::ostringstream os;
            os << "effective frequency singular at q = " << orbit.q.transpose()
               << ", theta = " << orbit.theta_grid[k] << " (Im of the clock gradient vanishes)";
            throw NumericalError(os.str());
        }
        const cplx z = m1.I.row(k).head(N).cwiseProduct(orbit.alpha.row(k).cast<cplx>()).sum();
        acc += z.imag() / im_clock;
    }
    return orbit.omega + orbit.omega * acc / n;
}

BackboneCurve backbone(const OrbitFamily& fam,
                       const std::function<double(const Eigen::VectorXd&)>& observable) {
    BackboneCurve bb;
    const int i2 = fam.mode_count == 2 ? fam.n2() / 2 : 0;
    const int i3 = fam.mode_count == 2 ? fam.n3() / 2 : 0;
    for (int i = 0; i < fam.n1(); ++i) {
        const ForcedOrbit& orb = fam.mode_count == 2 ? fam.at(i, i2, i3) : fam.at(i);
        bb.q.push_back(orb.q[0]);
        bb.omega_bar.push_back(effective_frequency(orb, fam.prov.lambda1.imag()));
        double lo = 0, hi = 0;
        for (int k = 0; k < orb.n_theta(); ++k) {
            const double v = observable(orb.x_gamma.row(k).transpose());
            if (k == 0) lo = hi = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        bb.amplitude.push_back(hi - lo);
        std::vector<cplx> ks;
        for (const auto& m : orb.modes) ks.push_back(m.kappa);
        bb.kappa.push_back(std::move(ks));
    }
    return bb;
}

OrbitFamily extend_family_two_mode(const OrbitFamily& base, const DynamicalSystem& sys,
                                   const TwoModeOptions& opt) {
    if (base.mode_count != 1)
        throw ConfigError("extend_family_two_mode requires a one-parameter base family");
    if (base.orbits.empty() || base.orbits.back().modes.size() < 2)
        throw ConfigError("extend_family_two_mode: base family must track a second mode");
    const int j2 = base.prov.tracked_modes.at(1);

    OrbitFamily fam;
    fam.mode_count = 2;
    fam.prov = base.prov;
    fam.prov.n_theta = opt.n_theta;
    fam.hit_boundary = base.hit_boundary;
    fam.terminal_q = base.terminal_q;

    // Thin the adaptive base grid to a bounded q1 axis (always keeping the
    // analytic q = 0 node and the tip).
    std::vector<int> keep;
    double last = -1e300;
    for (int i = 0; i < base.n1(); ++i) {
        if (i == 0 || i == base.n1() - 1 || base.q_grid[i] - last >= opt.q1_spacing) {
            keep.push_back(i);
            last = base.q_grid[i];
        }
    }

    auto axis = [](double qmax, double dq) {
        const int half = int(std::lround(qmax / dq));
        std::vector<double> g;
        for (int i = -half; i <= half; ++i) g.push_back(i * dq);
        return g;
    };
    fam.q2_grid = axis(opt.q2_max, opt.delta_q2);
    fam.q3_grid = axis(opt.q3_max, opt.delta_q3);
    const int n2 = int(fam.q2_grid.size());
    const int n3 = int(fam.q3_grid.size());
    const int c2 = n2 / 2;
    const int c3 = n3 / 2;

    for (int ii : keep) fam.q_grid.push_back(base.q_grid[ii]);
    fam.orbits.resize(size_t(fam.n1()) * n2 * n3);

    const int N = base.orbits.front().dim();
    for (int s = 0; s < int(keep.size()); ++s) {
        const ForcedOrbit center = resample_orbit(base.at(keep[s]), opt.n_theta);
        std::vector<ForcedOrbit> slice(size_t(n2) * n3);
        auto cell = [&](int i2, int i3) -> ForcedOrbit& {
            return slice[size_t(i2) * n3 + i3];
        };
        cell(c2, c3) = center;

        auto march = [&](int i2, int i3, const ForcedOrbit& src, bool along_q2) {
            const double step = along_q2 ? fam.q2_grid[i2] - src.q[1]
                                         : fam.q3_grid[i3] - src.q[2];
            const MatrixXcd& g2 = src.mode(j2).g;
            const MatrixXd dir = along_q2 ? MatrixXd(2.0 * g2.leftCols(N).real())
                                          : MatrixXd(-2.0 * g2.leftCols(N).imag());
            VectorXd q_new(3);
            q_new << src.q[0], fam.q2_grid[i2], fam.q3_grid[i3];
            try {
                cell(i2, i3) = continue_orbit(sys, src, q_new, step, dir, opt.shoot_tol,
                                              opt.ode, opt.invariant_tol, nullptr);
            } catch (const NumericalError& e) {
                std::ostringstream os;
                os << "two-mode lattice stalled at (q1, q2, q3) = (" << q_new.transpose()
                   << "): " << e.what();
                throw FamilyBoundaryError(os.str(), q_new[0]);
            }
        };

        // The center node carries q = (q1); lift it to the 3-entry form.
        {
            VectorXd q3v(3);
            q3v << center.q[0], 0.0, 0.0;
            cell(c2, c3).q = q3v;
        }
        for (int i2 = c2 + 1; i2 < n2; ++i2) march(i2, c3, cell(i2 - 1, c3), true);
        for (int i2 = c2 - 1; i2 >= 0; --i2) march(i2, c3, cell(i2 + 1, c3), true);
        for (int i2 = 0; i2 < n2; ++i2) {
            for (int i3 = c3 + 1; i3 < n3; ++i3) march(i2, i3, cell(i2, i3 - 1), false);
            for (int i3 = c3 - 1; i3 >= 0; --i3) march(i2, i3, cell(i2, i3 + 1), false);
        }

        // Family directions for E: (2 Re g_1, 2 Re g_j2, -2 Im g_j2).
        for (int i2 = 0; i2 < n2; ++i2)
            for (int i3 = 0; i3 < n3; ++i3) {
                ForcedOrbit& orb = cell(i2, i3);
                std::vector<MatrixXd> dirs;
                dirs.push_back(2.0 * orb.modes.front().g.leftCols(N).real());
                dirs.push_back(2.0 * orb.mode(j2).g.leftCols(N).real());
                dirs.push_back(-2.0 * orb.mode(j2).g.leftCols(N).imag());
                for (auto& m : orb.modes) m.E = sensitivity_E(orb, m.index, dirs);
                fam.at(s, i2, i3) = std::move(orb);
            }
    }
    return fam;
}

FamilyDefects family_defects(const DynamicalSystem& sys, const OrbitFamily& fam,
                             bool include_shooting) {
    FamilyDefects d;
    for (const auto& orb : fam.orbits) {
        d.biorthogonality = std::max(d.biorthogonality, biorthogonality_defect(orb));
        d.phase_normalization = std::max(d.phase_normalization, phase_normalization_defect(orb));
        if (include_shooting)
            d.shooting = std::max(d.shooting, shooting_residual(sys, orb));
    }
    return d;
}

} // namespace apr
