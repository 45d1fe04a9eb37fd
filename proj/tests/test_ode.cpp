#include "apr/ode.hpp"
#include "apr/errors.hpp"

#include <doctest.h>
#include <cmath>

using namespace apr;
using Eigen::VectorXd;

TEST_SUITE_BEGIN("ode");

TEST_CASE("exponential decay hits the analytic value") {
    OdeSolver solver([](double, const VectorXd& y, VectorXd& dy) { dy[0] = -y[0]; });
    VectorXd y0(1);
    y0 << 1.0;
    VectorXd y = solver.integrate(0, 2, y0);
    CHECK(y[0] == doctest::Approx(std::exp(-2.0)).epsilon(1e-10));
}

TEST_CASE("harmonic oscillator over many periods") {
    OdeSolver solver([](double, const VectorXd& y, VectorXd& dy) {
        dy[0] = y[1];
        dy[1] = -y[0];
    });
    VectorXd y0(2);
    y0 << 1.0, 0.0;
    double T = 2 * M_PI;
    VectorXd y = solver.integrate(0, 10 * T, y0);
    CHECK(std::abs(y[0] - 1.0) < 1e-8);
    CHECK(std::abs(y[1]) < 1e-8);
}

TEST_CASE("dense output is accurate between steps") {
    OdeSolver solver([](double, const VectorXd& y, VectorXd& dy) {
        dy[0] = y[1];
        dy[1] = -y[0];
    });
    VectorXd y0(2);
    y0 << 0.0, 1.0;
    double maxerr = 0;
    solver.integrate(0, 20, y0, [&](const DenseStep& ds, const VectorXd&, double) {
        for (int i = 1; i <= 7; ++i) {
            double t = ds.t0 + ds.h * i / 8.0;
            VectorXd yi = ds.eval(t);
            maxerr = std::max(maxerr, std::abs(yi[0] - std::sin(t)));
        }
        return true;
    });
    CHECK(maxerr < 1e-8);
}

TEST_CASE("backward integration") {
    OdeSolver solver([](double t, const VectorXd&, VectorXd& dy) { dy[0] = std::cos(t); });
    VectorXd y0(1);
    y0 << std::sin(2.0);
    VectorXd y = solver.integrate(2.0, 0.0, y0);
    CHECK(std::abs(y[0]) < 1e-10);
}

TEST_CASE("sample() matches the analytic trajectory on a grid") {
    OdeSolver solver([](double, const VectorXd& y, VectorXd& dy) {
        dy[0] = y[1];
        dy[1] = -y[0];
    });
    VectorXd y0(2);
    y0 << 1.0, 0.0;
    std::vector<double> ts;
    for (int i = 0; i <= 100; ++i) ts.push_back(0.15 * i);
    Eigen::MatrixXd tr = solver.sample(0, 15.0, y0, ts);
    double maxerr = 0;
    for (size_t i = 0; i < ts.size(); ++i)
        maxerr = std::max(maxerr, std::abs(tr(i, 0) - std::cos(ts[i])));
    CHECK(maxerr < 1e-8);
}

TEST_CASE("tighter tolerance gives smaller error") {
    auto run = [](double rtol) {
        OdeOptions o;
        o.rel_tol = rtol;
        o.abs_tol = rtol * 1e-2;
        OdeSolver solver([](double, const VectorXd& y, VectorXd& dy) {
            dy[0] = y[1];
            dy[1] = -std::sin(y[0]);
        }, o);
        VectorXd y0(2);
        y0 << 1.0, 0.0;
        return solver.integrate(0, 50.0, y0);
    };
    VectorXd coarse = run(1e-6), fine = run(1e-12), ref = run(1e-13);
    CHECK((fine - ref).norm() < (coarse - ref).norm());
    CHECK((fine - ref).norm() < 1e-8);
}

TEST_CASE("callback can stop the run early") {
    OdeSolver solver([](double, const VectorXd& y, VectorXd& dy) { dy[0] = -y[0]; });
    VectorXd y0(1);
    y0 << 1.0;
    VectorXd y = solver.integrate(0, 10, y0, [](const DenseStep&, const VectorXd& yy, double) {
        return yy[0] > 0.5;
    });
    CHECK(y[0] <= 0.5);
    CHECK(solver.t_end() < 10.0);
    CHECK(solver.t_end() > 0.5 * std::log(2.0));
}

TEST_SUITE_END();
