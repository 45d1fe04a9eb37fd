// Scratch diagnostic: measure odd-harmonic symmetry of the pendulum family
// tip and compare the full-period variational map with the square of the
// half-period map.
#include <cstdio>

#include "apr/dynsys.hpp"
#include "apr/family.hpp"
#include "apr/fourier.hpp"
#include "apr/ode.hpp"
#include "apr/periodic.hpp"

using namespace apr;

static double asym(const Eigen::MatrixXd& s) {
    const int n = int(s.rows()), h = n / 2;
    double a = 0;
    for (int k = 0; k < n; ++k)
        a = std::max(a, (s.row((k + h) % n) + s.row(k)).cwiseAbs().maxCoeff());
    return a;
}

int main(int argc, char** argv) {
    auto sys = make_system("pendulum");
    FamilyOptions opt;
    opt.q_max = 5.0;
    opt.n_theta = 256;
    if (argc > 1) opt.delta_omega = std::atof(argv[1]) * 0.99899;
    opt.auto_retune = argc > 2;
    auto fam = build_family(sys, opt);
    std::printf("terminal q = %.6f orbits = %zu retunes = %zu\n", fam.q_tip(),
                fam.orbits.size(), fam.prov.retunes.size());
    std::printf("note: %s\n", fam.prov.boundary_note.c_str());
    for (const auto& ev : fam.prov.retunes)
        std::printf("retune at q=%.4f: delta_omega=%.5f T %.5f -> %.5f\n", ev.q,
                    ev.delta_omega, ev.T_before, ev.T_after);
    {
        const ForcedOrbit& t = fam.orbits.back();
        std::printf("tip swing = %.5f  max speed = %.5f  omega = %.5f\n",
                    t.x_gamma.col(0).cwiseAbs().maxCoeff(),
                    t.x_gamma.col(1).cwiseAbs().maxCoeff(), t.omega);
    }

    for (size_t i : {size_t(1), fam.orbits.size() / 4, fam.orbits.size() / 2,
                     3 * fam.orbits.size() / 4, fam.orbits.size() - 1}) {
        const ForcedOrbit& o = fam.orbits[i];
        std::printf("q=%.5f  x asym = %.3e (scale %.3f)  alpha asym = %.3e\n", o.q[0],
                    asym(o.x_gamma), o.x_gamma.cwiseAbs().maxCoeff(), asym(o.alpha));
    }

    // Full vs half-period variational map at the tip.
    const ForcedOrbit& tip = fam.orbits.back();
    auto mon = monodromy(sys, tip, opt.ode);
    const int N = sys.dim_state;
    const FourierInterp af = FourierInterp::fit(tip.alpha);
    const double T = tip.T, om = tip.omega;
    const Eigen::VectorXd u0 = sys.zero_input();
    auto rhs = [&](double t, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
        const Eigen::VectorXd x = z.head(N);
        dz.head(N) = sys.eval_rhs(x, u0) + af.eval_real(om * t);
        const Eigen::MatrixXd J = sys.eval_jac_state(x, u0);
        Eigen::Map<const Eigen::MatrixXd> Phi(z.data() + N, N, N);
        Eigen::Map<Eigen::MatrixXd> dPhi(dz.data() + N, N, N);
        dPhi = J * Phi;
    };
    Eigen::VectorXd z0(N + N * N);
    z0.head(N) = tip.x_gamma.row(0).transpose();
    Eigen::Map<Eigen::MatrixXd>(z0.data() + N, N, N).setIdentity();
    OdeSolver solver(rhs, opt.ode);
    const Eigen::VectorXd zh = solver.integrate(0.0, T / 2, z0);
    const Eigen::MatrixXd Q = Eigen::Map<const Eigen::MatrixXd>(zh.data() + N, N, N);
    const Eigen::MatrixXd Q2 = Q * Q;
    Eigen::EigenSolver<Eigen::MatrixXd> es(Q);
    std::printf("Q eigs: ");
    for (int i = 0; i < N; ++i)
        std::printf("(%.5f,%.5f) ", es.eigenvalues()[i].real(), es.eigenvalues()[i].imag());
    std::printf("\nPhi eigs: ");
    for (int i = 0; i < mon.state_mult.size(); ++i)
        std::printf("(%.5f,%.5f) ", mon.state_mult[i].real(), mon.state_mult[i].imag());
    std::printf("\n|Phi - Q^2| = %.3e   |Phi| = %.3f\n",
                (mon.Phi.topLeftCorner(N, N) - Q2).cwiseAbs().maxCoeff(),
                mon.Phi.topLeftCorner(N, N).cwiseAbs().maxCoeff());

    // half-trip state error: does x(T/2) = -x(0)?
    std::printf("x(T/2) + x(0) = %.3e\n",
                (zh.head(N) + tip.x_gamma.row(0).transpose()).cwiseAbs().maxCoeff());
    return 0;
}
