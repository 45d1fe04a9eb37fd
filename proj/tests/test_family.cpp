#include <doctest.h>

#include "apr/errors.hpp"
#include "apr/family.hpp"
#include "apr/fourier.hpp"
#include "apr/spline.hpp"

#include <cmath>

using namespace apr;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using cplx = std::complex<double>;

namespace {

const DynamicalSystem& pendulum_sys() {
    static DynamicalSystem sys = make_system("pendulum");
    return sys;
}

/* Pendulum family continued until a termination signal fires; shared
 * between cases because the build is the expensive part. */
const OrbitFamily& pendulum_full_family() {
    static OrbitFamily fam = [] {
        FamilyOptions opt;
        opt.q_max = 5.0;
        return build_family(pendulum_sys(), opt);
    }();
    return fam;
}

const OrbitFamily& pendulum_short_family() {
    static OrbitFamily fam = [] {
        FamilyOptions opt;
        opt.q_max = 0.6;
        opt.n_theta = 128;
        opt.delta_q_max = 0.1;
        return build_family(pendulum_sys(), opt);
    }();
    return fam;
}

} // namespace

TEST_SUITE("family") {

TEST_CASE("pendulum family reaches a boundary with a recorded reason") {
    const OrbitFamily& fam = pendulum_full_family();
    CHECK(fam.hit_boundary);
    CHECK(fam.terminal_q > 1.5);
    CHECK(fam.terminal_q < 2.2);
    MESSAGE("terminal q = ", fam.terminal_q, ", orbits = ", fam.orbits.size());
    MESSAGE("boundary: ", fam.prov.boundary_note);
    // The genuine boundary of this family: the pair's Floquet rotation
    // number reaches zero and the multipliers meet the positive real axis.
    CHECK(fam.prov.boundary_note.find("positive real axis") != std::string::npos);
    // The pendulum softens: the orbit through the tip swings wide.
    const double swing = fam.orbits.back().x_gamma.col(0).maxCoeff();
    MESSAGE("tip max angle = ", swing);
    CHECK(swing > 2.2);
    CHECK(swing < M_PI);
    // The stored tip still carries a complex-conjugate pair, close to (but
    // not past) the axis: the branch angle decreases through -2 pi, so the
    // wrapped angle approaches zero from above.
    const ForcedOrbit& tip = fam.orbits.back();
    const double wrapped =
        std::remainder(tip.modes.front().kappa.imag() * tip.T, 2.0 * M_PI);
    MESSAGE("tip wrapped multiplier angle = ", wrapped);
    CHECK(wrapped > 0.0);
    CHECK(wrapped < 0.7);

    // En route the pair crossed the negative real axis (a semisimple double
    // point for this odd-symmetric system): the continuous angle at the tip
    // sits beyond -pi, and no stored orbit has a real pair.
    CHECK(tip.modes.front().kappa.imag() * tip.T < -M_PI);
    for (const auto& orb : fam.orbits)
        if (orb.q[0] > 0) CHECK(std::abs(orb.modes.front().kappa.imag()) > 1e-6);
}

TEST_CASE("family grid, shared period, and exact zero limit") {
    const OrbitFamily& fam = pendulum_full_family();
    REQUIRE(fam.n1() >= 10);
    CHECK(fam.q_grid.front() == 0.0);
    for (int i = 1; i < fam.n1(); ++i) CHECK(fam.q_grid[i] > fam.q_grid[i - 1]);
    const double T0 = fam.at(0).T;
    for (const auto& orb : fam.orbits) CHECK(std::abs(orb.T - T0) <= 1e-12);
    CHECK(fam.prov.retunes.empty());

    const ForcedOrbit& z = fam.at(0);
    CHECK((z.x_gamma.rowwise() - fam.prov.x_ss.transpose()).norm() == 0.0);
    CHECK(z.alpha.norm() == 0.0);
    const auto& m1 = z.modes.front();
    CHECK(std::abs(m1.kappa - (fam.prov.lambda1 - cplx(0, z.omega))) < 1e-14);
    CHECK((m1.E.col(0).array() + 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("per-orbit invariants hold along the whole family") {
    const OrbitFamily& fam = pendulum_full_family();
    const FamilyDefects d = family_defects(pendulum_sys(), fam);
    MESSAGE("biorthogonality ", d.biorthogonality, ", normalization ", d.phase_normalization);
    CHECK(d.biorthogonality <= 1e-6);
    CHECK(d.phase_normalization <= 1e-6);

    const int N = pendulum_sys().dim_state;
    for (const auto& orb : fam.orbits) {
        const auto& m1 = orb.modes.front();
        CHECK(m1.branch_m == 1);
        CHECK((m1.E.col(0).array() + 1.0).abs().maxCoeff() <= 1e-6);
        if (orb.q[0] > 0) CHECK(m1.I.col(N).imag().maxCoeff() < 0.0);
    }
    // The pendulum's Jacobian trace is constant (damping does not depend on
    // the state), so the sum of the two exponents is fixed; while the pair
    // stays complex-conjugate, Re kappa is pinned to half the trace along
    // the entire family.
    CHECK(std::abs(fam.orbits.back().modes.front().kappa.real() -
                   fam.at(0).modes.front().kappa.real()) <= 1e-3);
}

TEST_CASE("refinement is idempotent on stored orbits") {
    const OrbitFamily& fam = pendulum_full_family();
    const ForcedOrbit& orb = fam.at(fam.n1() / 2);
    ShootStats stats;
    const MatrixXd x2 =
        refine_orbit(pendulum_sys(), orb.alpha, orb.x_gamma, orb.T, 1e-10,
                     orbit_ode_options(), &stats);
    CHECK((x2 - orb.x_gamma).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(stats.iterations <= 1);
}

namespace {

/** Spline-based d x_gamma / dq at node i0 from a window of +-4 family
 *  nodes. */
MatrixXd family_fd_derivative(const OrbitFamily& fam, int i0) {
    const int N = fam.at(0).dim();
    const int n = fam.at(0).n_theta();
    const int lo = i0 - 4, hi = i0 + 4;
    REQUIRE(lo >= 0);
    REQUIRE(hi < fam.n1());
    std::vector<double> qs;
    for (int i = lo; i <= hi; ++i) qs.push_back(fam.q_grid[i]);
    MatrixXd dxdq(n, N);
    for (int c = 0; c < N; ++c) {
        MatrixXd vals(int(qs.size()), n);
        for (int i = lo; i <= hi; ++i) vals.row(i - lo) = fam.at(i).x_gamma.col(c).transpose();
        const VectorSpline sp = VectorSpline::fit(qs, vals);
        dxdq.col(c) = sp.deriv(fam.q_grid[i0]);
    }
    return dxdq;
}

} // namespace

TEST_CASE("eigenfunction direction matches the finite-difference family derivative") {
    // Fine fixed-step family near the linear regime: here the q labels are
    // accurate and the identity d x_gamma / dq = 2 Re g holds sharply.
    FamilyOptions opt;
    opt.q0 = 1e-3;
    opt.delta_q0 = 1e-3;
    opt.delta_q_max = 1e-3;
    opt.q_max = 9e-3;
    opt.n_theta = 128;
    const OrbitFamily fine = build_family(pendulum_sys(), opt);
    REQUIRE(fine.n1() >= 10);
    {
        const int i0 = 5;
        const ForcedOrbit& orb = fine.at(i0);
        const int N = orb.dim();
        const MatrixXd dxdq = family_fd_derivative(fine, i0);
        const MatrixXd dir = 2.0 * orb.modes.front().g.leftCols(N).real();
        const double scale = dir.cwiseAbs().maxCoeff();
        MESSAGE("fine grid: |dx/dq - 2 Re g| = ", (dxdq - dir).cwiseAbs().maxCoeff(),
                " scale ", scale);
        CHECK((dxdq - dir).cwiseAbs().maxCoeff() <= 1e-4 * scale);
        const MatrixXcd E_fd = sensitivity_E(orb, orb.modes.front().index, {dxdq});
        CHECK((E_fd.col(0).array() + 1.0).abs().maxCoeff() <= 1e-4);
    }

    // Mid-family on the production grid the identity still holds, but only
    // to the accuracy of the q labels: the forcing is advanced by an Euler
    // update per continuation step, so the labels drift by O(step). The
    // looser bound documents that drift.
    const OrbitFamily& fam = pendulum_full_family();
    const int i0 = fam.n1() / 2;
    const ForcedOrbit& orb = fam.at(i0);
    const int N = orb.dim();
    const MatrixXd dxdq = family_fd_derivative(fam, i0);
    const MatrixXd dir = 2.0 * orb.modes.front().g.leftCols(N).real();
    const double scale = dir.cwiseAbs().maxCoeff();
    MESSAGE("production grid: |dx/dq - 2 Re g| = ", (dxdq - dir).cwiseAbs().maxCoeff(),
            " scale ", scale);
    CHECK((dxdq - dir).cwiseAbs().maxCoeff() <= 0.06 * scale);
    const MatrixXcd E_fd = sensitivity_E(orb, orb.modes.front().index, {dxdq});
    CHECK((E_fd.col(0).array() + 1.0).abs().maxCoeff() <= 0.06);
}

TEST_CASE("period retuning keeps the curve and shifts the exponent as predicted") {
    OrbitFamily fam = pendulum_short_family(); // copy: retuning mutates
    const DynamicalSystem& sys = pendulum_sys();
    const ForcedOrbit tip = fam.orbits.back();
    const double omega_bar_before = effective_frequency(tip, fam.prov.lambda1.imag());

    const double dw = 0.02 * tip.omega;
    retune_period(fam, sys, dw);
    const ForcedOrbit& ret = fam.orbits.back();

    CHECK(ret.q[0] == tip.q[0]);
    CHECK(ret.omega == doctest::Approx(tip.omega + dw).epsilon(1e-14));
    const double scale = 1.0 + tip.x_gamma.cwiseAbs().maxCoeff();
    CHECK((ret.x_gamma - tip.x_gamma).cwiseAbs().maxCoeff() <= 1e-8 * scale);

    const cplx k_old = tip.modes.front().kappa;
    const cplx k_new = ret.modes.front().kappa;
    MESSAGE("Re kappa shift = ", k_new.real() - k_old.real());
    CHECK(std::abs(k_new.real() - k_old.real()) <= 1e-4);
    const double predicted = 2.0 * M_PI * (ret.T - tip.T) / (tip.T * tip.T);
    MESSAGE("Im shift ", k_new.imag() - k_old.imag(), " predicted ", predicted);
    CHECK(std::abs((k_new.imag() - k_old.imag()) - predicted) <= 0.1 * std::abs(predicted));

    REQUIRE(fam.prov.retunes.size() == 1);
    CHECK(fam.prov.retunes[0].delta_omega == dw);

    // The input-free rotation rate is a property of the curve, not of the
    // parameterization; it is preserved to first order in the shift (the
    // retuned forcing is the first-order transport of the old one).
    const double omega_bar_after = effective_frequency(ret, fam.prov.lambda1.imag());
    MESSAGE("omega_bar before ", omega_bar_before, " after ", omega_bar_after);
    CHECK(std::abs(omega_bar_after - omega_bar_before) <= 1e-3 * omega_bar_before);

    const FamilyDefects d = family_defects(sys, fam);
    CHECK(d.biorthogonality <= 1e-6);
    CHECK(d.phase_normalization <= 1e-6);

    // Continuation proceeds at the new period.
    FamilyOptions opt;
    opt.n_theta = 128;
    extend_family(fam, sys, 1e-3, opt);
    CHECK(fam.orbits.back().T == doctest::Approx(ret.T).epsilon(1e-14));
}

TEST_CASE("pendulum backbone: effective frequency decreases from the linear limit") {
    const OrbitFamily& fam = pendulum_full_family();
    const BackboneCurve bb = backbone(fam, default_observable("pendulum"));
    REQUIRE(int(bb.q.size()) == fam.n1());
    CHECK(bb.omega_bar.front() == fam.prov.lambda1.imag());
    for (size_t i = 1; i < bb.omega_bar.size(); ++i)
        CHECK(bb.omega_bar[i] < bb.omega_bar[i - 1]);
    MESSAGE("omega_bar range ", bb.omega_bar.front(), " .. ", bb.omega_bar.back());
    CHECK(bb.omega_bar.front() - bb.omega_bar.back() > 0.05);
    for (size_t i = 1; i < bb.amplitude.size(); ++i) CHECK(bb.amplitude[i] > bb.amplitude[i - 1]);
}

TEST_CASE("planar population backbone: effective frequency increases") {
    FamilyOptions opt;
    opt.q_max = 0.4;
    opt.n_theta = 96;
    opt.delta_q_max = 0.1;
    opt.delta_omega = -0.1 * 1.4927; // stiffening system: detune from below
    const DynamicalSystem sys = make_system("planar10");
    const OrbitFamily fam = build_family(sys, opt);
    CHECK(!fam.hit_boundary);
    CHECK(fam.q_tip() == doctest::Approx(0.4).epsilon(1e-12));

    const FamilyDefects d = family_defects(sys, fam);
    CHECK(d.biorthogonality <= 1e-6);
    CHECK(d.phase_normalization <= 1e-6);

    const BackboneCurve bb = backbone(fam, default_observable("planar10"));
    CHECK(bb.omega_bar.front() == fam.prov.lambda1.imag());
    for (size_t i = 1; i < bb.omega_bar.size(); ++i)
        CHECK(bb.omega_bar[i] > bb.omega_bar[i - 1]);
    MESSAGE("omega_bar range ", bb.omega_bar.front(), " .. ", bb.omega_bar.back());
    for (const auto& orb : fam.orbits)
        CHECK((orb.modes.front().E.col(0).array() + 1.0).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("two-mode lattice: base plane, closure constants, and continuity") {
    const DynamicalSystem sys = make_system("ieee9bus");
    FamilyOptions opt;
    opt.q_max = 0.3;
    opt.n_theta = 64;
    opt.delta_q_max = 0.05;
    opt.extra_modes = {3};
    const OrbitFamily base = build_family(sys, opt);
    REQUIRE(!base.hit_boundary);
    REQUIRE(base.orbits.back().modes.size() == 2);

    TwoModeOptions topt;
    topt.q2_max = 0.2;
    topt.delta_q2 = 0.1;
    topt.q3_max = 0.2;
    topt.delta_q3 = 0.1;
    topt.n_theta = 32;
    topt.q1_spacing = 0.12;
    const OrbitFamily fam = extend_family_two_mode(base, sys, topt);

    CHECK(fam.mode_count == 2);
    REQUIRE(fam.n2() == 5);
    REQUIRE(fam.n3() == 5);
    CHECK(fam.q2_grid[2] == 0.0);
    CHECK(fam.q3_grid[2] == 0.0);
    REQUIRE(fam.n1() >= 3);

    // Center plane reproduces the base family (up to spectral resampling).
    for (int s = 0; s < fam.n1(); ++s) {
        int ib = -1;
        for (int i = 0; i < base.n1(); ++i)
            if (base.q_grid[i] == fam.q_grid[s]) ib = i;
        REQUIRE(ib >= 0);
        const ForcedOrbit& a = fam.at(s, 2, 2);
        const ForcedOrbit& b = base.at(ib);
        for (int k = 0; k < a.n_theta(); ++k)
            CHECK((a.x_gamma.row(k) - b.x_gamma.row(2 * k)).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(std::abs(a.modes.front().kappa - b.modes.front().kappa) <= 1e-12);
    }

    const int N = sys.dim_state;
    const FamilyDefects d = family_defects(sys, fam);
    MESSAGE("lattice defects: ", d.biorthogonality, " ", d.phase_normalization);
    CHECK(d.biorthogonality <= 1e-6);
    CHECK(d.phase_normalization <= 1e-6);

    double e_err = 0;
    for (const auto& orb : fam.orbits) {
        const auto& E1 = orb.mode(1).E;
        const auto& E3 = orb.mode(3).E;
        e_err = std::max(e_err, (E1.col(0).array() + 1.0).abs().maxCoeff());
        e_err = std::max(e_err, E1.col(1).cwiseAbs().maxCoeff());
        e_err = std::max(e_err, E1.col(2).cwiseAbs().maxCoeff());
        e_err = std::max(e_err, E3.col(0).cwiseAbs().maxCoeff());
        e_err = std::max(e_err, (E3.col(1).array() + 1.0).abs().maxCoeff());
        e_err = std::max(e_err, (E3.col(2).array() + cplx(0, 1)).abs().maxCoeff());
    }
    MESSAGE("closure-constant defect ", e_err);
    CHECK(e_err <= 1e-5);

    // One lattice step separates neighbors by the predicted direction to
    // leading order.
    const ForcedOrbit& c0 = fam.at(fam.n1() - 1, 2, 2);
    const ForcedOrbit& c1 = fam.at(fam.n1() - 1, 3, 2);
    const MatrixXd pred = 2.0 * 0.1 * c0.mode(3).g.leftCols(N).real();
    const double step_err = (c1.x_gamma - c0.x_gamma - pred).cwiseAbs().maxCoeff();
    MESSAGE("lattice step defect ", step_err);
    CHECK(step_err <= 2e-2);
    CHECK(std::abs(c1.modes.front().kappa - c0.modes.front().kappa) < 0.1);
}

} // TEST_SUITE
