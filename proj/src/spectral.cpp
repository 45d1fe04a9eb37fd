#include "apr/spectral.hpp"
#include "apr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace apr {

Spectrum compute_spectrum(const Eigen::MatrixXd& A) {
    const int n = int(A.rows());
    Eigen::EigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigen-decomposition failed to converge");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto& vals = es.eigenvalues();
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (vals[a].real() != vals[b].real()) return vals[a].real() > vals[b].real();
        return vals[a].imag() < vals[b].imag();
    });
    // Real parts equal up to roundoff are one tie group, sorted by ascending
    // frequency with the positive-imaginary member of each conjugate pair
    // first. Keeps pairs with the same decay rate in frequency order
    // regardless of eigensolver jitter.
    const double re_tie = 1e-7 * (1.0 + A.norm());
    for (int lo = 0; lo < n;) {
        int hi = lo + 1;
        while (hi < n && vals[order[lo]].real() - vals[order[hi]].real() <= re_tie) ++hi;
        std::sort(order.begin() + lo, order.begin() + hi, [&](int a, int b) {
            const double fa = std::abs(vals[a].imag()), fb = std::abs(vals[b].imag());
            if (fa != fb) return fa < fb;
            return vals[a].imag() > vals[b].imag();
        });
        lo = hi;
    }

    Spectrum sp;
    sp.values.resize(n);
    sp.right.resize(n, n);
    for (int j = 0; j < n; ++j) {
        sp.values[j] = vals[order[j]];
        Eigen::VectorXcd v = es.eigenvectors().col(order[j]);
        v /= v.norm();
        // Phase convention: largest-magnitude component real negative.
        int a = 0;
        double best = -1;
        for (int i = 0; i < n; ++i)
            if (std::abs(v[i]) > best) {
                best = std::abs(v[i]);
                a = i;
            }
        std::complex<double> va = v[a];
        v *= -std::conj(va) / std::abs(va);
        sp.right.col(j) = v;
    }

    double scale = A.norm();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(sp.values[i] - sp.values[j]) <= 1e-8 * scale) {
                std::ostringstream os;
                os << "spectrum is not simple: eigenvalues " << i << " and " << j
                   << " closer than 1e-8*||A||";
                throw NumericalError(os.str());
            }

    // left^H = right^{-1}, so left^H right = I exactly up to solve error.
    sp.left = sp.right.inverse().adjoint();
    return sp;
}

Eigen::VectorXd find_fixed_point(const DynamicalSystem& sys, Eigen::VectorXd x,
                                 double tol, int max_iter) {
    Eigen::VectorXd u0 = sys.zero_input();
    Eigen::VectorXd F(sys.dim_state);
    std::vector<double> history;
    for (int it = 0; it < max_iter; ++it) {
        sys.rhs(x, u0, F);
        double r = F.norm();
        history.push_back(r);
        if (r <= tol) {
            Eigen::MatrixXd A = sys.eval_jac_state(x, u0);
            Spectrum sp = compute_spectrum(A);
            double remax = sp.values.real().maxCoeff();
            if (remax >= 0) {
                std::ostringstream os;
                os << "fixed point of '" << sys.name
                   << "' is not asymptotically stable (max Re lambda = " << remax << ")";
                throw NumericalError(os.str());
            }
            return x;
        }
        Eigen::MatrixXd J = sys.eval_jac_state(x, u0);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
        x -= lu.solve(F);
    }
    std::ostringstream os;
    os << "fixed-point Newton for '" << sys.name << "' did not reach " << tol << " in "
       << max_iter << " iterations; residuals:";
    for (double r : history) os << " " << r;
    throw NumericalError(os.str());
}

SpectralMode oscillatory_mode(const Spectrum& sp, int mode_index, int anchor_index) {
    const int n = int(sp.values.size());
    int seen = 0, col = -1;
    for (int j = 0; j < n; ++j) {
        if (sp.values[j].imag() > 0 && ++seen == mode_index) {
            col = j;
            break;
        }
    }
    if (col < 0)
        throw ConfigError("oscillatory mode index " + std::to_string(mode_index) +
                          " out of range");
    SpectralMode m;
    m.lambda = sp.values[col];
    m.v = sp.right.col(col);
    m.w = sp.left.col(col);
    if (anchor_index < 0) {
        double best = -1;
        for (int i = 0; i < n; ++i)
            if (std::abs(m.v[i]) > best) {
                best = std::abs(m.v[i]);
                m.anchor_index = i;
            }
    } else {
        if (anchor_index >= n) throw ConfigError("anchor index out of range");
        m.anchor_index = anchor_index;
    }
    std::complex<double> va = m.v[m.anchor_index];
    if (std::abs(va) == 0.0)
        throw NumericalError("anchor component of eigenvector vanishes");
    // Rotate the pair so arg(v_a) = -pi; the same unit factor keeps w^H v = 1.
    std::complex<double> c = -std::abs(va) / va;
    m.v *= c;
    m.w *= c;
    return m;
}

std::pair<std::complex<double>, Eigen::VectorXcd>
perturb_eigenpair(const Eigen::MatrixXd& A, const Eigen::MatrixXd& dA, const SpectralMode& mode) {
    Eigen::VectorXcd dAv = dA.cast<std::complex<double>>() * mode.v;
    std::complex<double> dlam = mode.w.dot(dAv); // w^H dA v

    // Minimum-norm solution of (A - lambda I) dv0 = dlam v - dA v; the
    // matrix is singular along v, so use a rank-revealing solve.
    Eigen::MatrixXcd M = A.cast<std::complex<double>>();
    M.diagonal().array() -= mode.lambda;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(M);
    Eigen::VectorXcd dv0 = cod.solve(dlam * mode.v - dAv);

    // Free multiple of v fixed by keeping ||v|| and the anchored phase
    // stationary to first order.
    double re_a = -(mode.v.dot(dv0)).real();
    std::complex<double> ra = dv0[mode.anchor_index] / mode.v[mode.anchor_index];
    double im_a = -ra.imag();
    Eigen::VectorXcd dv = dv0 + std::complex<double>(re_a, im_a) * mode.v;
    return {dlam, dv};
}

} // namespace apr
