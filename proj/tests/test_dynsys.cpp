#include "apr/dynsys.hpp"
#include "apr/errors.hpp"
#include "apr/spectral.hpp"

#include <doctest.h>
#include <cmath>
#include <random>

using namespace apr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_SUITE_BEGIN("dynsys");

namespace {

void check_jacobians(const DynamicalSystem& sys, double xlo, double xhi, unsigned seed) {
    DynamicalSystem fd = sys; // same rhs, forced finite differences
    fd.jac_state = nullptr;
    fd.jac_input = nullptr;
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> U(xlo, xhi);
    for (int trial = 0; trial < 100; ++trial) {
        VectorXd x(sys.dim_state), u(sys.dim_input);
        for (int i = 0; i < sys.dim_state; ++i) x[i] = U(rng);
        for (int i = 0; i < sys.dim_input; ++i) u[i] = 0.3 * U(rng);
        MatrixXd Ja = sys.eval_jac_state(x, u), Jf = fd.eval_jac_state(x, u);
        CHECK((Ja - Jf).norm() / (1.0 + Ja.norm()) < 1e-5);
        MatrixXd Ba = sys.eval_jac_input(x, u), Bf = fd.eval_jac_input(x, u);
        CHECK((Ba - Bf).norm() / (1.0 + Ba.norm()) < 1e-5);
    }
}

} // namespace

TEST_CASE("pendulum: analytic vs finite-difference Jacobians") {
    check_jacobians(make_pendulum(), -2.0, 2.0, 101);
}

TEST_CASE("planar10: analytic vs finite-difference Jacobians") {
    check_jacobians(make_planar_population(), -2.0, 2.0, 102);
}

TEST_CASE("ieee9bus: analytic vs finite-difference Jacobians") {
    check_jacobians(build_phase_difference_model(), -1.0, 1.0, 103);
}

TEST_CASE("pendulum linearization at the origin") {
    PendulumParams p;
    DynamicalSystem sys = make_pendulum(p);
    double ml2 = p.mass * p.length * p.length;
    LinearizedModel lm = linearized_model(sys, VectorXd::Zero(2));
    CHECK(lm.A(0, 0) == 0.0);
    CHECK(lm.A(0, 1) == 1.0);
    CHECK(lm.A(1, 0) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(lm.A(1, 1) == doctest::Approx(-p.damping / ml2).epsilon(1e-14));
    CHECK(lm.B(0, 0) == 0.0);
    CHECK(lm.B(1, 0) == doctest::Approx(1.0 / ml2).epsilon(1e-14));

    Spectrum sp = compute_spectrum(lm.A);
    CHECK(std::abs(sp.values[0] - std::complex<double>(-0.050, 0.999)) < 1e-3);
}

TEST_CASE("pendulum and planar10 rest at the origin") {
    for (const char* name : {"pendulum", "planar10"}) {
        DynamicalSystem sys = make_system(name);
        VectorXd x0 = VectorXd::Zero(sys.dim_state);
        CHECK(sys.eval_rhs(x0).norm() <= 1e-12);
    }
}

TEST_CASE("planar10 leading modes match the published linearization") {
    DynamicalSystem sys = make_planar_population();
    MatrixXd A = sys.eval_jac_state(VectorXd::Zero(20), VectorXd::Zero(1));
    Spectrum sp = compute_spectrum(A);
    SpectralMode m1 = oscillatory_mode(sp, 1);
    CHECK(std::abs(m1.lambda - std::complex<double>(-0.01, 1.49)) < 0.01);
    SpectralMode m2 = oscillatory_mode(sp, 2);
    CHECK(std::abs(m2.lambda - std::complex<double>(-0.25, 1.23)) < 0.02);
    // All ten modes are damped.
    CHECK(sp.values.real().maxCoeff() < 0.0);
}

TEST_CASE("ieee9bus equilibrium and modes") {
    DynamicalSystem sys = build_phase_difference_model();
    VectorXd x = find_fixed_point(sys, default_guess("ieee9bus"), 1e-10);
    CHECK(sys.eval_rhs(x).norm() <= 1e-10);
    VectorXd ref(5);
    ref << -0.30, -0.19, 0, 0, 0;
    for (int i = 0; i < 5; ++i) CHECK(std::abs(x[i] - ref[i]) < 0.005);

    MatrixXd A = sys.eval_jac_state(x, VectorXd::Zero(3));
    Spectrum sp = compute_spectrum(A);
    SpectralMode m1 = oscillatory_mode(sp, 1);
    SpectralMode m2 = oscillatory_mode(sp, 2);
    CHECK(std::abs(m1.lambda - std::complex<double>(-0.25, 8.69)) < 0.02);
    CHECK(std::abs(m2.lambda - std::complex<double>(-0.25, 13.36)) < 0.02);
    bool has_real = false;
    for (int j = 0; j < 5; ++j)
        if (std::abs(sp.values[j].imag()) < 1e-9) {
            has_real = true;
            CHECK(std::abs(sp.values[j].real() + 0.5) < 0.02);
        }
    CHECK(has_real);
}

TEST_CASE("registry") {
    CHECK(make_system("pendulum").dim_state == 2);
    CHECK(make_system("planar10").dim_state == 20);
    CHECK(make_system("ieee9bus").dim_state == 5);
    CHECK_THROWS_AS(make_system("unknown"), ConfigError);
    CHECK_THROWS_AS(build_phase_difference_model([] {
                        PowerSystemParams p = PowerSystemParams::standard();
                        p.machines = 2;
                        return p;
                    }()),
                    ConfigError);
}

TEST_SUITE_END();
