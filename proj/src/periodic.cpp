#include "apr/periodic.hpp"
#include "apr/errors.hpp"
#include "apr/fourier.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace apr {

namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cplx = std::complex<double>;

VectorXd make_theta_grid(int n) {
    VectorXd th(n);
    for (int k = 0; k < n; ++k) th[k] = 2.0 * M_PI * k / n;
    return th;
}

std::vector<double> sample_times(double T, int n) {
    std::vector<double> ts(n + 1);
    for (int k = 0; k <= n; ++k) ts[k] = T * k / n;
    return ts;
}

std::string q_label(const ForcedOrbit& orbit) {
    std::ostringstream os;
    os << "q=(";
    for (int i = 0; i < orbit.q.size(); ++i) os << (i ? "," : "") << orbit.q[i];
    os << ")";
    return os.str();
}

} // namespace

const FloquetMode& ForcedOrbit::mode(int index) const {
    for (const auto& m : modes)
        if (m.index == index) return m;
    throw ConfigError("orbit has no stored mode " + std::to_string(index));
}

FloquetMode& ForcedOrbit::mode(int index) {
    for (auto& m : modes)
        if (m.index == index) return m;
    throw ConfigError("orbit has no stored mode " + std::to_string(index));
}

bool ForcedOrbit::has_mode(int index) const {
    for (const auto& m : modes)
        if (m.index == index) return true;
    return false;
}

ForcedOrbit seed_orbit(const SpectralMode& mode, const VectorXd& x_ss, double q0,
                       double delta_omega, int n_theta) {
    double im = mode.lambda.imag();
    if (im <= 0) throw ConfigError("seed orbit needs an oscillatory mode (Im lambda > 0)");
    if (delta_omega == 0.0 || delta_omega <= -im / 3.0 || delta_omega >= im) {
        std::ostringstream os;
        os << "detuning " << delta_omega << " outside the admissible range ("
           << -im / 3.0 << ", " << im << ") \\ {0}";
        throw ConfigError(os.str());
    }
    ForcedOrbit orb;
    orb.q.resize(1);
    orb.q[0] = q0;
    orb.omega = im + delta_omega;
    orb.T = 2.0 * M_PI / orb.omega;
    orb.theta_grid = make_theta_grid(n_theta);
    orb.x_gamma.resize(n_theta, x_ss.size());
    orb.alpha.resize(n_theta, x_ss.size());
    const VectorXd vr = mode.v.real(), vi = mode.v.imag();
    const double re = mode.lambda.real();
    for (int k = 0; k < n_theta; ++k) {
        double c = std::cos(orb.theta_grid[k]), s = std::sin(orb.theta_grid[k]);
        VectorXd e1 = vr * c - vi * s; // Re(v e^{i theta})
        VectorXd e2 = vi * c + vr * s; // Im(v e^{i theta})
        orb.x_gamma.row(k) = (x_ss + 2.0 * q0 * e1).transpose();
        orb.alpha.row(k) = (-2.0 * q0 * re * e1 - 2.0 * delta_omega * q0 * e2).transpose();
    }
    return orb;
}

Eigen::MatrixXd refine_orbit(const DynamicalSystem& sys, const MatrixXd& alpha,
                             const MatrixXd& guess, double T, double tol,
                             const OdeOptions& ode, ShootStats* stats) {
    const int N = sys.dim_state;
    const int n = int(alpha.rows());
    if (guess.rows() != n || guess.cols() != N || alpha.cols() != N)
        throw ConfigError("refine_orbit: sample shape mismatch");
    FourierInterp a_itp = FourierInterp::fit(alpha);
    const double w = 2.0 * M_PI / T;
    const VectorXd u0 = sys.zero_input();

    // State + variational columns.
    auto var_rhs = [&](double t, const VectorXd& y, VectorXd& dy) {
        Eigen::Map<const MatrixXd> Phi(y.data() + N, N, N);
        Eigen::Map<MatrixXd> dPhi(dy.data() + N, N, N);
        VectorXd x = y.head(N);
        VectorXd f(N);
        sys.rhs(x, u0, f);
        dy.head(N) = f + a_itp.eval_real(w * t);
        MatrixXd J = sys.eval_jac_state(x, u0);
        dPhi.noalias() = J * Phi;
    };

    VectorXd x0 = guess.row(0).transpose();
    ShootStats local;
    ShootStats& st = stats ? *stats : local;
    st.residuals.clear();
    OdeSolver solver(var_rhs, ode);
    const int max_iter = 12;
    MatrixXd M(N, N);
    for (int it = 0;; ++it) {
        VectorXd y0(N + N * N);
        y0.head(N) = x0;
        Eigen::Map<MatrixXd>(y0.data() + N, N, N) = MatrixXd::Identity(N, N);
        VectorXd yT;
        try {
            yT = solver.integrate(0, T, y0);
        } catch (const NumericalError& e) {
            std::ostringstream os;
            os << "orbit shooting diverged (period " << T << "): " << e.what()
               << "; residuals:";
            for (double rr : st.residuals) os << " " << rr;
            throw NumericalError(os.str());
        }
        VectorXd r = yT.head(N) - x0;
        M = Eigen::Map<const MatrixXd>(yT.data() + N, N, N);
        double rn = r.lpNorm<Eigen::Infinity>();
        st.residuals.push_back(rn);
        st.iterations = it;
        if (rn <= tol * (1.0 + x0.lpNorm<Eigen::Infinity>())) break;
        if (it >= max_iter ||
            (it >= 2 && st.residuals[it] > 10.0 * st.residuals[it - 2])) {
            std::ostringstream os;
            os << "orbit shooting did not converge (period " << T << "); residuals:";
            for (double rr : st.residuals) os << " " << rr;
            throw NumericalError(os.str());
        }
        MatrixXd A = M - MatrixXd::Identity(N, N);
        x0 += A.partialPivLu().solve(-r);
    }

    // Resample the converged orbit on the theta grid.
    OdeSolver plain([&](double t, const VectorXd& y, VectorXd& dy) {
        VectorXd f(N);
        sys.rhs(y, u0, f);
        dy = f + a_itp.eval_real(w * t);
    }, ode);
    MatrixXd tr = plain.sample(0, T, x0, sample_times(T, n));
    return tr.topRows(n);
}

MonodromyResult monodromy(const DynamicalSystem& sys, const ForcedOrbit& orbit,
                          const OdeOptions& ode) {
    const int N = orbit.dim();
    const int n = orbit.n_theta();
    FourierInterp a_itp = FourierInterp::fit(orbit.alpha);
    FourierInterp da_itp = a_itp.derivative();
    const double w = orbit.omega, T = orbit.T;
    const VectorXd u0 = sys.zero_input();

    // y = [x, Phi columns, X]; Xdot = J X + alpha'(t).
    auto rhs = [&](double t, const VectorXd& y, VectorXd& dy) {
        Eigen::Map<const MatrixXd> Phi(y.data() + N, N, N);
        Eigen::Map<MatrixXd> dPhi(dy.data() + N, N, N);
        VectorXd x = y.head(N);
        VectorXd f(N);
        sys.rhs(x, u0, f);
        dy.head(N) = f + a_itp.eval_real(w * t);
        MatrixXd J = sys.eval_jac_state(x, u0);
        dPhi.noalias() = J * Phi;
        dy.tail(N) = J * y.tail(N) + w * da_itp.eval_real(w * t);
    };
    VectorXd y0 = VectorXd::Zero(N + N * N + N);
    y0.head(N) = orbit.x_gamma.row(0).transpose();
    Eigen::Map<MatrixXd>(y0.data() + N, N, N) = MatrixXd::Identity(N, N);
    OdeSolver solver(rhs, ode);
    VectorXd yT = solver.integrate(0, T, y0);

    MonodromyResult res;
    MatrixXd M = Eigen::Map<const MatrixXd>(yT.data() + N, N, N);
    res.X = yT.tail(N);
    res.Phi = MatrixXd::Zero(N + 1, N + 1);
    res.Phi.topLeftCorner(N, N) = M;
    res.Phi.topRightCorner(N, 1) = res.X;
    res.Phi(N, N) = 1.0;

    Eigen::EigenSolver<MatrixXd> es(M);
    if (es.info() != Eigen::Success)
        throw NumericalError("monodromy eigen-decomposition failed at " + q_label(orbit));
    // Order by descending Re of the principal exponent, tie ascending Im.
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::vector<cplx> expn(N);
    for (int j = 0; j < N; ++j) expn[j] = std::log(es.eigenvalues()[j]) / T;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (expn[a].real() != expn[b].real()) return expn[a].real() > expn[b].real();
        return expn[a].imag() < expn[b].imag();
    });
    res.state_mult.resize(N);
    res.state_vecs.resize(N, N);
    for (int j = 0; j < N; ++j) {
        res.state_mult[j] = es.eigenvalues()[order[j]];
        res.state_vecs.col(j) = es.eigenvectors().col(order[j]);
    }
    res.state_inv = res.state_vecs.inverse();

    res.multipliers.resize(N + 1);
    res.exponents.resize(N + 1);
    for (int j = 0; j < N; ++j) {
        res.multipliers[j] = res.state_mult[j];
        res.exponents[j] = std::log(res.state_mult[j]) / T;
    }
    res.multipliers[N] = 1.0;
    res.exponents[N] = 0.0;
    return res;
}

int MonodromyResult::match(cplx kappa, double T) const {
    cplx target = std::exp(kappa * T);
    int best = -1;
    double d1 = 1e300, d2 = 1e300;
    for (int j = 0; j < state_mult.size(); ++j) {
        double d = std::abs(state_mult[j] - target);
        if (d < d1) {
            d2 = d1;
            d1 = d;
            best = j;
        } else if (d < d2) {
            d2 = d;
        }
    }
    double scale = 1.0 + std::abs(state_mult[best]);
    if (d1 > 0.3 * scale)
        throw NumericalError("Floquet multiplier continuity lost (distance " +
                             std::to_string(d1) + ")");
    if (d2 - d1 < 1e-6 * scale)
        throw NumericalError("Floquet multipliers nearly coincide (gap " +
                             std::to_string(d2 - d1) + ")");
    return best;
}

cplx match_exponent(cplx mu, double T, cplx kappa_ref) {
    cplx base = std::log(mu) / T;
    double step = 2.0 * M_PI / T;
    double k = std::round((kappa_ref.imag() - base.imag()) / step);
    return cplx(base.real(), base.imag() + k * step);
}

MatrixXcd floquet_eigenfunction(const DynamicalSystem& sys, const ForcedOrbit& orbit,
                                cplx kappa, const MonodromyResult& mon, int anchor_index,
                                const OdeOptions& ode) {
    const int N = orbit.dim();
    const int n = orbit.n_theta();
    int col;
    try {
        col = mon.match(kappa, orbit.T);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at " + q_label(orbit));
    }
    VectorXcd v = mon.state_vecs.col(col);
    v /= v.norm();
    cplx va = v[anchor_index];
    if (std::abs(va) < 1e-6)
        throw NumericalError("anchor component of the Floquet eigenvector vanishes at " +
                             q_label(orbit));
    v *= -std::abs(va) / va;

    FourierInterp x_itp = FourierInterp::fit(orbit.x_gamma);
    const double w = orbit.omega, T = orbit.T;
    const VectorXd u0 = sys.zero_input();
    // Complex dg/dt = (J - kappa) g packed as [Re g; Im g].
    auto rhs = [&](double t, const VectorXd& y, VectorXd& dy) {
        MatrixXd J = sys.eval_jac_state(x_itp.eval_real(w * t), u0);
        auto gr = y.head(N), gi = y.tail(N);
        dy.head(N) = J * gr - kappa.real() * gr + kappa.imag() * gi;
        dy.tail(N) = J * gi - kappa.real() * gi - kappa.imag() * gr;
    };
    VectorXd y0(2 * N);
    y0 << v.real(), v.imag();
    OdeSolver solver(rhs, ode);
    MatrixXd tr = solver.sample(0, T, y0, sample_times(T, n));

    double defect = (tr.row(n) - tr.row(0)).norm();
    if (defect > 1e-6)
        throw NumericalError("Floquet eigenfunction is not periodic (defect " +
                             std::to_string(defect) + ") at " + q_label(orbit) +
                             "; exponents may be degenerate");
    MatrixXcd g(n, N + 1);
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < N; ++i) g(k, i) = cplx(tr(k, i), tr(k, N + i));
        g(k, N) = 0.0;
    }
    return g;
}

MatrixXcd floquet_gradient(const DynamicalSystem& sys, const ForcedOrbit& orbit, cplx kappa,
                           const MonodromyResult& mon, const MatrixXcd& g,
                           const OdeOptions& ode) {
    const int N = orbit.dim();
    const int n = orbit.n_theta();
    int col;
    try {
        col = mon.match(kappa, orbit.T);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at " + q_label(orbit));
    }
    // Left eigen-data of the augmented period map: z1 solves Phi_x^T z1 =
    // mu z1 (a row of the inverse eigenvector matrix), and the clock
    // component is X^T z1 / (mu - 1).
    VectorXcd z1 = mon.state_inv.row(col).transpose();
    cplx mu = mon.state_mult[col];
    cplx z2 = mon.X.cast<cplx>().cwiseProduct(z1).sum() / (mu - 1.0); // X^T z1 / (mu - 1)

    FourierInterp x_itp = FourierInterp::fit(orbit.x_gamma);
    FourierInterp da_itp = FourierInterp::fit(orbit.alpha).derivative();
    const double w = orbit.omega, T = orbit.T;
    const VectorXd u0 = sys.zero_input();
    // Complex dI1/dt = -(J^T - kappa) I1, dI2/dt = -alpha'(t)^T I1 + kappa I2,
    // packed as [Re I1; Im I1; Re I2; Im I2].
    auto rhs = [&](double t, const VectorXd& y, VectorXd& dy) {
        MatrixXd J = sys.eval_jac_state(x_itp.eval_real(w * t), u0);
        VectorXd ap = w * da_itp.eval_real(w * t);
        auto ir = y.head(N), ii = y.segment(N, N);
        double cr = y[2 * N], ci = y[2 * N + 1];
        dy.head(N) = -J.transpose() * ir + kappa.real() * ir - kappa.imag() * ii;
        dy.segment(N, N) = -J.transpose() * ii + kappa.real() * ii + kappa.imag() * ir;
        dy[2 * N] = -ap.dot(ir) + kappa.real() * cr - kappa.imag() * ci;
        dy[2 * N + 1] = -ap.dot(ii) + kappa.real() * ci + kappa.imag() * cr;
    };
    VectorXd y0(2 * N + 2);
    y0 << z1.real(), z1.imag(), z2.real(), z2.imag();
    OdeSolver solver(rhs, ode);
    MatrixXd tr = solver.sample(0, T, y0, sample_times(T, n));

    double defect = (tr.row(n) - tr.row(0)).norm() / (1e-30 + tr.row(0).norm());
    if (defect > 1e-6)
        throw NumericalError("adjoint gradient is not periodic (defect " +
                             std::to_string(defect) + ") at " + q_label(orbit));
    MatrixXcd I(n, N + 1);
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < N; ++i) I(k, i) = cplx(tr(k, i), tr(k, N + i));
        I(k, N) = cplx(tr(k, 2 * N), tr(k, 2 * N + 1));
    }
    // Scale so that g(0)^T I(0) = 1 (plain transpose pairing).
    cplx c0 = 0;
    for (int i = 0; i <= N; ++i) c0 += g(0, i) * I(0, i);
    if (std::abs(c0) < 1e-12)
        throw NumericalError("degenerate eigenfunction pairing at " + q_label(orbit));
    I /= c0;
    return I;
}

MatrixXd phase_gradient(const DynamicalSystem& sys, const ForcedOrbit& orbit,
                        const OdeOptions& ode) {
    const int N = orbit.dim();
    const int n = orbit.n_theta();
    FourierInterp x_itp = FourierInterp::fit(orbit.x_gamma);
    FourierInterp da_itp = FourierInterp::fit(orbit.alpha).derivative();
    const double w = orbit.omega, T = orbit.T;
    const VectorXd u0 = sys.zero_input();

    // Left eigenvector of the augmented period map for the unit multiplier.
    // The transpose map sends [z1; z2] to [Phi_x^T z1; X^T z1 + z2]; a fixed
    // point needs Phi_x^T z1 = z1, impossible for z1 != 0 because the state
    // block is strictly stable. Hence Z(0) = (0, ..., 0, c), and the
    // normalization F_aug^T Z(0) = omega with F_aug = [F + alpha; 1] fixes
    // c = omega. The integration below reproduces the constancy of Z; tests
    // verify F_aug^T Z = omega on the whole grid.
    VectorXd z0 = VectorXd::Zero(N + 1);
    z0[N] = w;

    auto rhs = [&](double t, const VectorXd& y, VectorXd& dy) {
        MatrixXd J = sys.eval_jac_state(x_itp.eval_real(w * t), u0);
        VectorXd ap = w * da_itp.eval_real(w * t);
        dy.head(N) = -J.transpose() * y.head(N);
        dy[N] = -ap.dot(y.head(N));
    };
    OdeSolver solver(rhs, ode);
    MatrixXd tr = solver.sample(0, T, z0, sample_times(T, n));
    return tr.topRows(n);
}

MatrixXcd sensitivity_E(const ForcedOrbit& orbit, int mode_index,
                        const std::vector<MatrixXd>& dxdq) {
    const FloquetMode& m = orbit.mode(mode_index);
    const int n = orbit.n_theta();
    const int N = orbit.dim();
    MatrixXcd E(n, dxdq.size());
    for (size_t k = 0; k < dxdq.size(); ++k) {
        if (dxdq[k].rows() != n || dxdq[k].cols() != N)
            throw ConfigError("sensitivity_E: derivative sample shape mismatch");
        for (int t = 0; t < n; ++t)
            E(t, k) = -(m.I.row(t).head(N) * dxdq[k].row(t).transpose().cast<cplx>())(0);
    }
    return E;
}

double biorthogonality_defect(const ForcedOrbit& orbit) {
    double defect = 0;
    const int N = orbit.dim();
    for (const auto& mj : orbit.modes) {
        if (mj.I.size() == 0) continue;
        for (const auto& mk : orbit.modes) {
            if (mk.g.size() == 0) continue;
            for (int t = 0; t < orbit.n_theta(); ++t) {
                cplx dot = 0, dotc = 0;
                for (int i = 0; i <= N; ++i) {
                    dot += mk.g(t, i) * mj.I(t, i);
                    dotc += std::conj(mk.g(t, i)) * mj.I(t, i);
                }
                double want = (mk.index == mj.index) ? 1.0 : 0.0;
                defect = std::max(defect, std::abs(dot - want));
                // Conjugate partner of mode k pairs to zero.
                defect = std::max(defect, std::abs(dotc));
            }
        }
    }
    return defect;
}

double phase_normalization_defect(const ForcedOrbit& orbit) {
    FourierInterp dx_itp = FourierInterp::fit(orbit.x_gamma).derivative();
    const int n = orbit.n_theta();
    const int N = orbit.dim();
    double scale = 0, defect = 0;
    std::vector<VectorXd> dydth(n);
    for (int t = 0; t < n; ++t) {
        VectorXd d(N + 1);
        d.head(N) = dx_itp.eval_real(orbit.theta_grid[t]);
        d[N] = 1.0 / orbit.omega;
        dydth[t] = d;
        scale = std::max(scale, d.norm());
    }
    for (const auto& m : orbit.modes) {
        if (m.I.size() == 0) continue;
        for (int t = 0; t < n; ++t) {
            cplx dot = 0;
            for (int i = 0; i <= N; ++i) dot += m.I(t, i) * dydth[t][i];
            defect = std::max(defect, std::abs(dot));
        }
    }
    return defect / (1e-300 + scale);
}

double shooting_residual(const DynamicalSystem& sys, const ForcedOrbit& orbit,
                         const OdeOptions& ode) {
    FourierInterp a_itp = FourierInterp::fit(orbit.alpha);
    const double w = orbit.omega;
    const VectorXd u0 = sys.zero_input();
    OdeSolver solver([&](double t, const VectorXd& y, VectorXd& dy) {
        VectorXd f(int(y.size()));
        sys.rhs(y, u0, f);
        dy = f + a_itp.eval_real(w * t);
    }, ode);
    VectorXd x0 = orbit.x_gamma.row(0).transpose();
    VectorXd xT = solver.integrate(0, orbit.T, x0);
    return (xT - x0).lpNorm<Eigen::Infinity>() / (1.0 + x0.lpNorm<Eigen::Infinity>());
}

} // namespace apr
