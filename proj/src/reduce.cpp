#include "apr/reduce.hpp"

#include "apr/errors.hpp"
#include "apr/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace apr {

using cplx = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_2pi(double theta) {
    double t = std::fmod(theta, 2.0 * kPi);
    return t < 0 ? t + 2.0 * kPi : t;
}

/** Fourier-coefficient samples of one theta-periodic quantity at every
 *  family node, prior to harmonic selection. */
struct QuantityCoef {
    bool real = false;
    std::vector<int> ms;              // full harmonic list of the fit
    std::vector<MatrixXcd> per_node;  // n_harmonics x nc each
};

QuantityCoef fit_nodes(const OrbitFamily& fam, bool real,
                       const std::function<MatrixXcd(const ForcedOrbit&)>& samples_of) {
    QuantityCoef qc;
    qc.real = real;
    qc.per_node.reserve(fam.orbits.size());
    for (const auto& orb : fam.orbits) {
        std::vector<int> ms;
        MatrixXcd coef;
        fourier_coefficients(samples_of(orb), ms, coef);
        if (!qc.per_node.empty() && ms != qc.ms)
            throw ConfigError("orbit family mixes theta resolutions; rebuild with a uniform n_theta");
        qc.ms = std::move(ms);
        qc.per_node.push_back(std::move(coef));
    }
    return qc;
}

} // namespace

const char* to_string(TerminationReason r) {
    switch (r) {
        case TerminationReason::completed: return "completed";
        case TerminationReason::family_boundary: return "family-boundary";
        case TerminationReason::singularity: return "singularity";
    }
    return "?";
}

ReducedModel ReducedModel::build(const DynamicalSystem& sys, const OrbitFamily& fam,
                                 const ReduceOptions& opt) {
    if (fam.orbits.empty()) throw ConfigError("cannot reduce an empty orbit family");
    const int N = fam.orbits.front().dim();
    if (N != sys.dim_state)
        throw ConfigError("orbit family and system disagree on the state dimension");

    const double T0 = fam.orbits.front().T;
    for (const auto& orb : fam.orbits)
        if (std::abs(orb.T - T0) > 1e-12 * T0) {
            std::ostringstream os;
            os << "orbit family carries " << fam.prov.retunes.size()
               << " period retune(s), so its forcing period varies across nodes; a single "
                  "smooth model cannot interpolate it. Rebuild the family without retunes "
                  "or split it at the retune amplitudes.";
            throw ConfigError(os.str());
        }

    ReducedModel m;
    m.sys_ = sys;
    m.prov_ = fam.prov;
    m.range_margin_ = opt.range_margin;
    m.n_params_ = fam.mode_count == 2 ? 3 : 1;
    m.grid1_ = fam.q_grid;
    m.grid2_ = fam.q2_grid;
    m.grid3_ = fam.q3_grid;

    for (const auto& mode : fam.orbits.front().modes) m.mode_indices_.push_back(mode.index);
    const int n_continued = fam.mode_count; // leading tracked slots drive the solve
    if (int(m.mode_indices_.size()) < n_continued)
        throw ConfigError("orbit family lacks Floquet data for its continued mode(s)");

    if (opt.retained) {
        m.retained_ = *opt.retained;
    } else {
        for (size_t i = n_continued; i < m.mode_indices_.size(); ++i)
            m.retained_.push_back(m.mode_indices_[i]);
    }
    for (int j : m.retained_) {
        const auto it = std::find(m.mode_indices_.begin(), m.mode_indices_.end(), j);
        if (it == m.mode_indices_.end() || (it - m.mode_indices_.begin()) < n_continued)
            throw ConfigError("retained mode " + std::to_string(j) +
                              " is not an extra tracked mode of the family");
        for (const auto& orb : fam.orbits)
            if (orb.mode(j).g.size() == 0)
                throw ConfigError("retained mode " + std::to_string(j) +
                                  " has no stored eigenfunction samples");
    }

    // Collect Fourier coefficients for every interpolated quantity.
    std::vector<QuantityCoef> coefs;
    std::vector<Block*> targets;
    coefs.push_back(fit_nodes(fam, true, [](const ForcedOrbit& o) -> MatrixXcd {
        return o.x_gamma.cast<cplx>();
    }));
    targets.push_back(&m.b_x_);
    coefs.push_back(fit_nodes(fam, true, [](const ForcedOrbit& o) -> MatrixXcd {
        return o.alpha.cast<cplx>();
    }));
    targets.push_back(&m.b_alpha_);
    m.b_I_.resize(m.mode_indices_.size());
    m.b_E_.resize(m.mode_indices_.size());
    for (size_t s = 0; s < m.mode_indices_.size(); ++s) {
        const int idx = m.mode_indices_[s];
        coefs.push_back(fit_nodes(
            fam, false, [idx](const ForcedOrbit& o) -> MatrixXcd { return o.mode(idx).I; }));
        targets.push_back(&m.b_I_[s]);
        coefs.push_back(fit_nodes(
            fam, false, [idx](const ForcedOrbit& o) -> MatrixXcd { return o.mode(idx).E; }));
        targets.push_back(&m.b_E_[s]);
    }
    m.b_g_.resize(m.retained_.size());
    for (size_t r = 0; r < m.retained_.size(); ++r) {
        const int idx = m.retained_[r];
        const int n = N;
        coefs.push_back(fit_nodes(fam, false, [idx, n](const ForcedOrbit& o) -> MatrixXcd {
            return o.mode(idx).g.leftCols(n);
        }));
        targets.push_back(&m.b_g_[r]);
    }

    // Select harmonics per quantity: the rows whose largest coefficient
    // anywhere in the family clears the pruning threshold (m = 0 always
    // kept so constants survive).
    int offset = 0;
    for (size_t qi = 0; qi < coefs.size(); ++qi) {
        const QuantityCoef& qc = coefs[qi];
        const int n_rows = int(qc.ms.size());
        VectorXd row_max = VectorXd::Zero(n_rows);
        for (const auto& c : qc.per_node)
            row_max = row_max.cwiseMax(c.cwiseAbs().rowwise().maxCoeff());
        const double scale = row_max.maxCoeff();
        Block& b = *targets[qi];
        b.real = qc.real;
        b.nc = int(qc.per_node.front().cols());
        b.offset = offset;
        for (int i = 0; i < n_rows; ++i) {
            if (qc.real && qc.ms[i] < 0) continue;
            if (qc.ms[i] != 0 && row_max[i] < opt.prune_rel * scale) continue;
            b.ms.push_back(qc.ms[i]);
        }
        offset += int(b.ms.size()) * b.nc * 2;
    }
    m.off_omega_ = offset++;
    m.off_kappa_.resize(m.mode_indices_.size());
    for (size_t s = 0; s < m.mode_indices_.size(); ++s) {
        m.off_kappa_[s] = offset;
        offset += 2;
    }
    m.n_channels_ = offset;

    // Pack the channel matrix, one row per family node.
    MatrixXd Y(int(fam.orbits.size()), m.n_channels_);
    for (size_t node = 0; node < fam.orbits.size(); ++node) {
        for (size_t qi = 0; qi < coefs.size(); ++qi) {
            const QuantityCoef& qc = coefs[qi];
            const Block& b = *targets[qi];
            const MatrixXcd& c = qc.per_node[node];
            for (size_t hi = 0; hi < b.ms.size(); ++hi) {
                const int row = int(std::find(qc.ms.begin(), qc.ms.end(), b.ms[hi]) -
                                    qc.ms.begin());
                for (int col = 0; col < b.nc; ++col) {
                    const int ch = b.offset + 2 * (int(hi) * b.nc + col);
                    Y(int(node), ch) = c(row, col).real();
                    Y(int(node), ch + 1) = c(row, col).imag();
                }
            }
        }
        const ForcedOrbit& orb = fam.orbits[node];
        Y(int(node), m.off_omega_) = orb.omega;
        for (size_t s = 0; s < m.mode_indices_.size(); ++s) {
            const cplx k = orb.mode(m.mode_indices_[s]).kappa;
            Y(int(node), m.off_kappa_[s]) = k.real();
            Y(int(node), m.off_kappa_[s] + 1) = k.imag();
        }
    }

    if (m.n_params_ == 1) {
        m.spline_ = VectorSpline::fit(m.grid1_, std::move(Y));
    } else {
        m.lattice_ = LocalCubic3::fit(m.grid1_, m.grid2_, m.grid3_, std::move(Y));
    }
    return m;
}

VectorXd ReducedModel::q_lower() const {
    VectorXd lo(n_params_);
    lo[0] = grid1_.front();
    if (n_params_ == 3) {
        lo[1] = grid2_.front();
        lo[2] = grid3_.front();
    }
    return lo;
}

VectorXd ReducedModel::q_upper() const {
    VectorXd hi(n_params_);
    hi[0] = grid1_.back();
    if (n_params_ == 3) {
        hi[1] = grid2_.back();
        hi[2] = grid3_.back();
    }
    return hi;
}

bool ReducedModel::in_range(const VectorXd& q, double margin) const {
    if (q.size() != n_params_) return false;
    const VectorXd lo = q_lower(), hi = q_upper();
    for (int k = 0; k < n_params_; ++k) {
        const double pad = margin * (hi[k] - lo[k]);
        if (q[k] < lo[k] - pad || q[k] > hi[k] + pad) return false;
    }
    return true;
}

void ReducedModel::check_range(const VectorXd& q) const {
    if (in_range(q, range_margin_)) return;
    std::ostringstream os;
    os << "amplitude coordinates (" << q.transpose() << ") are outside the family range ["
       << q_lower().transpose() << "] .. [" << q_upper().transpose() << "]";
    throw FamilyRangeError(os.str());
}

void ReducedModel::channels_at(const VectorXd& q, VectorXd& out) const {
    check_range(q);
    if (n_params_ == 1)
        spline_.eval(q[0], out);
    else
        lattice_.eval(q[0], q[1], q[2], out);
}

void ReducedModel::channels_dq(int k, const VectorXd& q, VectorXd& out) const {
    check_range(q);
    if (n_params_ == 1) {
        spline_.deriv(q[0], out);
        return;
    }
    // The lattice interpolant has no analytic gradient; central differences
    // at a step small against the node spacing are adequate for the
    // Gauss-Newton polish this feeds.
    const VectorXd lo = q_lower(), hi = q_upper();
    const double h = 1e-5 * (hi[k] - lo[k]);
    VectorXd qp = q, qm = q;
    qp[k] += h;
    qm[k] -= h;
    VectorXd up, um;
    lattice_.eval(qp[0], qp[1], qp[2], up);
    lattice_.eval(qm[0], qm[1], qm[2], um);
    out = (up - um) / (2.0 * h);
}

void ReducedModel::eval_block(const VectorXd& C, const Block& b, double theta, VectorXcd& out,
                              int deriv) {
    out.setZero(b.nc);
    for (size_t hi = 0; hi < b.ms.size(); ++hi) {
        const int mharm = b.ms[hi];
        cplx f = std::polar(1.0, mharm * theta);
        if (deriv == 1) f *= cplx(0.0, double(mharm));
        const int base = b.offset + 2 * int(hi) * b.nc;
        for (int c = 0; c < b.nc; ++c)
            out[c] += cplx(C[base + 2 * c], C[base + 2 * c + 1]) * f;
    }
}

void ReducedModel::eval_block_real(const VectorXd& C, const Block& b, double theta, VectorXd& out,
                                   int deriv) {
    out.setZero(b.nc);
    for (size_t hi = 0; hi < b.ms.size(); ++hi) {
        const int mharm = b.ms[hi];
        cplx f = std::polar(1.0, mharm * theta);
        if (deriv == 1) f *= cplx(0.0, double(mharm));
        const double w = mharm == 0 ? 1.0 : 2.0; // conjugate partner folded in
        const int base = b.offset + 2 * int(hi) * b.nc;
        for (int c = 0; c < b.nc; ++c)
            out[c] += w * (cplx(C[base + 2 * c], C[base + 2 * c + 1]) * f).real();
    }
}

int ReducedModel::tracked_slot(int mode_index) const {
    for (size_t s = 0; s < mode_indices_.size(); ++s)
        if (mode_indices_[s] == mode_index) return int(s);
    throw ConfigError("mode " + std::to_string(mode_index) + " is not tracked by this model");
}

int ReducedModel::retained_slot(int mode_index) const {
    for (size_t r = 0; r < retained_.size(); ++r)
        if (retained_[r] == mode_index) return int(r);
    throw ConfigError("mode " + std::to_string(mode_index) + " is not retained by this model");
}

double ReducedModel::omega(const VectorXd& q) const {
    VectorXd C;
    channels_at(q, C);
    return C[off_omega_];
}

cplx ReducedModel::kappa(int mode_index, const VectorXd& q) const {
    VectorXd C;
    channels_at(q, C);
    const int off = off_kappa_[tracked_slot(mode_index)];
    return cplx(C[off], C[off + 1]);
}

VectorXd ReducedModel::orbit_point(double theta, const VectorXd& q) const {
    VectorXd C, out;
    channels_at(q, C);
    eval_block_real(C, b_x_, theta, out);
    return out;
}

VectorXd ReducedModel::orbit_dtheta(double theta, const VectorXd& q) const {
    VectorXd C, out;
    channels_at(q, C);
    eval_block_real(C, b_x_, theta, out, 1);
    return out;
}

VectorXd ReducedModel::orbit_dq(int k, double theta, const VectorXd& q) const {
    VectorXd C, out;
    channels_dq(k, q, C);
    eval_block_real(C, b_x_, theta, out);
    return out;
}

VectorXd ReducedModel::forcing_alpha(double theta, const VectorXd& q) const {
    VectorXd C, out;
    channels_at(q, C);
    eval_block_real(C, b_alpha_, theta, out);
    return out;
}

VectorXcd ReducedModel::mode_I(int mode_index, double theta, const VectorXd& q) const {
    VectorXd C;
    VectorXcd out;
    channels_at(q, C);
    eval_block(C, b_I_[tracked_slot(mode_index)], theta, out);
    return out;
}

VectorXcd ReducedModel::mode_E(int mode_index, double theta, const VectorXd& q) const {
    VectorXd C;
    VectorXcd out;
    channels_at(q, C);
    eval_block(C, b_E_[tracked_slot(mode_index)], theta, out);
    return out;
}

VectorXcd ReducedModel::mode_g(int mode_index, double theta, const VectorXd& q) const {
    VectorXd C;
    VectorXcd out;
    channels_at(q, C);
    eval_block(C, b_g_[retained_slot(mode_index)], theta, out);
    return out;
}

void ReducedModel::ingredients(double theta, const VectorXd& q, Ingredients& out) const {
    VectorXd C;
    channels_at(q, C);
    eval_block_real(C, b_x_, theta, out.x_gamma);
    eval_block_real(C, b_alpha_, theta, out.alpha);
    out.omega = C[off_omega_];
    const size_t nm = mode_indices_.size();
    out.I.resize(nm);
    out.E.resize(nm);
    out.kappa.resize(nm);
    for (size_t s = 0; s < nm; ++s) {
        eval_block(C, b_I_[s], theta, out.I[s]);
        eval_block(C, b_E_[s], theta, out.E[s]);
        out.kappa[s] = cplx(C[off_kappa_[s]], C[off_kappa_[s] + 1]);
    }
    out.g_ret.resize(retained_.size());
    for (size_t r = 0; r < retained_.size(); ++r) eval_block(C, b_g_[r], theta, out.g_ret[r]);
}

VectorXd effective_input(const DynamicalSystem& sys, const VectorXd& x, const VectorXd& u,
                         const VectorXd& q, double theta, const ReducedModel& model) {
    return sys.eval_rhs(x, u) - sys.eval_rhs(x) - model.forcing_alpha(theta, q);
}

namespace {

cplx bilinear(const VectorXcd& a, const VectorXd& b) {
    cplx s = 0;
    for (int i = 0; i < b.size(); ++i) s += a[i] * b[i];
    return s;
}

/** Retained-coordinate dynamics shared by both solve variants. */
void retained_psi_dot(const ReducedModel& m, const ReducedModel::Ingredients& ing,
                      const ReducedState& s, const VectorXd& Ue, double f_theta,
                      const VectorXd& q_dot, ReducedDeriv& d) {
    const auto& tracked = m.tracked();
    d.psi_dot.resize(int(m.retained().size()));
    for (size_t r = 0; r < m.retained().size(); ++r) {
        int slot = -1;
        for (size_t si = 0; si < tracked.size(); ++si)
            if (tracked[si] == m.retained()[r]) slot = int(si);
        const VectorXcd& I = ing.I[slot];
        const VectorXcd& E = ing.E[slot];
        cplx Eq = 0;
        for (int k = 0; k < q_dot.size(); ++k) Eq += E[k] * q_dot[k];
        const int N = int(Ue.size());
        d.psi_dot[int(r)] = ing.kappa[slot] * s.psi[int(r)] + bilinear(I.head(N), Ue) +
                            I[N] * f_theta + Eq;
    }
}

} // namespace

ReducedDeriv reduced_rhs(const ReducedModel& m, const ReducedState& s, const VectorXd& u) {
    if (m.n_params() == 3) return reduced_rhs_two_mode(m, s, u);
    const double theta = wrap_2pi(s.theta);
    ReducedModel::Ingredients ing;
    m.ingredients(theta, s.q, ing);
    const int N = m.dim_state();

    VectorXd x = ing.x_gamma;
    for (size_t r = 0; r < ing.g_ret.size(); ++r)
        x += 2.0 * (s.psi[int(r)] * ing.g_ret[r]).real();
    const VectorXd Ue = m.system().eval_rhs(x, u) - m.system().eval_rhs(x) - ing.alpha;

    const cplx z = bilinear(ing.I[0].head(N), Ue);
    const cplx I12 = ing.I[0][N];
    const cplx E11 = ing.E[0][0];
    // [Re E11  Re I12] [q_dot  ]   [Re z]        (annihilates the continued
    // [Im E11  Im I12] [f_theta] = -[Im z]        pair's non-decay terms)
    const double det = E11.real() * I12.imag() - E11.imag() * I12.real();
    const double scale = std::abs(E11) * std::abs(I12);
    if (!(std::abs(det) > 1e-10 * scale)) {
        std::ostringstream os;
        os << "phase-amplitude solve is singular at theta = " << theta
           << ", q = " << s.q.transpose() << " (Im(I_2) vanishes relative to its magnitude)";
        throw SingularityError(os.str(), theta);
    }
    ReducedDeriv d;
    d.q_dot.resize(1);
    d.q_dot[0] = (-z.real() * I12.imag() + I12.real() * z.imag()) / det;
    d.f_theta = (-E11.real() * z.imag() + E11.imag() * z.real()) / det;
    d.theta_dot = ing.omega * (1.0 + d.f_theta);
    retained_psi_dot(m, ing, s, Ue, d.f_theta, d.q_dot, d);
    return d;
}

ReducedDeriv reduced_rhs_two_mode(const ReducedModel& m, const ReducedState& s,
                                  const VectorXd& u) {
    const double theta = wrap_2pi(s.theta);
    ReducedModel::Ingredients ing;
    m.ingredients(theta, s.q, ing);
    const int N = m.dim_state();

    VectorXd x = ing.x_gamma;
    for (size_t r = 0; r < ing.g_ret.size(); ++r)
        x += 2.0 * (s.psi[int(r)] * ing.g_ret[r]).real();
    const VectorXd Ue = m.system().eval_rhs(x, u) - m.system().eval_rhs(x) - ing.alpha;

    // Unknowns (q1_dot, f_theta, q2_dot, q3_dot): real and imaginary parts
    // of both continued pairs' non-decay terms must vanish.
    Eigen::Matrix4d A;
    Eigen::Vector4d rhs;
    for (int p = 0; p < 2; ++p) {
        const VectorXcd& I = ing.I[p];
        const VectorXcd& E = ing.E[p];
        const cplx z = bilinear(I.head(N), Ue);
        A(2 * p, 0) = E[0].real();
        A(2 * p, 1) = I[N].real();
        A(2 * p, 2) = E[1].real();
        A(2 * p, 3) = E[2].real();
        A(2 * p + 1, 0) = E[0].imag();
        A(2 * p + 1, 1) = I[N].imag();
        A(2 * p + 1, 2) = E[1].imag();
        A(2 * p + 1, 3) = E[2].imag();
        rhs[2 * p] = -z.real();
        rhs[2 * p + 1] = -z.imag();
    }
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 1e-12 * smax)) {
        std::ostringstream os;
        os << "two-mode phase-amplitude solve is singular at theta = " << theta
           << ", q = " << s.q.transpose();
        throw SingularityError(os.str(), theta);
    }
    const Eigen::Vector4d sol = svd.solve(rhs);

    ReducedDeriv d;
    d.q_dot.resize(3);
    d.q_dot << sol[0], sol[2], sol[3];
    d.f_theta = sol[1];
    d.theta_dot = ing.omega * (1.0 + d.f_theta);
    retained_psi_dot(m, ing, s, Ue, d.f_theta, d.q_dot, d);
    return d;
}

VectorXd reconstruct_state(const ReducedModel& m, const ReducedState& s) {
    const double theta = wrap_2pi(s.theta);
    VectorXd x = m.orbit_point(theta, s.q);
    for (size_t r = 0; r < m.retained().size(); ++r)
        x += 2.0 * (s.psi[int(r)] * m.mode_g(m.retained()[r], theta, s.q)).real();
    return x;
}

ReducedState lift_state(const ReducedModel& m, const VectorXd& x, const LiftOptions& opt) {
    const int P = m.n_params();
    const VectorXd lo = m.q_lower(), hi = m.q_upper();

    // Coarse scan of the family surface. For two continued modes only the
    // base plane (q2 = q3 = 0) is scanned; the polish moves off-plane.
    double best = std::numeric_limits<double>::infinity();
    double best_theta = 0;
    VectorXd best_q = VectorXd::Zero(P);
    const int nq = 48;
    for (int iq = 0; iq <= nq; ++iq) {
        VectorXd q = VectorXd::Zero(P);
        q[0] = lo[0] + (hi[0] - lo[0]) * double(iq) / nq;
        for (int it = 0; it < opt.theta_scan; ++it) {
            const double th = 2.0 * kPi * it / opt.theta_scan;
            const double dist = (m.orbit_point(th, q) - x).norm();
            if (dist < best) {
                best = dist;
                best_theta = th;
                best_q = q;
            }
        }
    }

    // Gauss-Newton polish of min over (theta, q) of |x_gamma - x|^2.
    double theta = best_theta;
    VectorXd q = best_q;
    VectorXd r = m.orbit_point(theta, q) - x;
    for (int iter = 0; iter < opt.refine_iters; ++iter) {
        MatrixXd J(x.size(), 1 + P);
        J.col(0) = m.orbit_dtheta(theta, q);
        for (int k = 0; k < P; ++k) J.col(1 + k) = m.orbit_dq(k, theta, q);
        const MatrixXd JtJ = J.transpose() * J;
        const VectorXd g = J.transpose() * r;
        VectorXd step = JtJ.ldlt().solve(-g);
        double lam = 1.0;
        for (int half = 0; half < 10; ++half) {
            double th_try = theta + lam * step[0];
            VectorXd q_try = q + lam * step.tail(P);
            for (int k = 0; k < P; ++k) q_try[k] = std::clamp(q_try[k], lo[k], hi[k]);
            const VectorXd r_try = m.orbit_point(th_try, q_try) - x;
            if (r_try.norm() <= r.norm() || half == 9) {
                theta = th_try;
                q = q_try;
                r = r_try;
                break;
            }
            lam *= 0.5;
        }
        if (step.norm() < 1e-12 * (1.0 + std::abs(theta) + q.norm())) break;
    }

    // Acceptance: the residual must be small against the matched orbit's
    // own size (absolute floor keeps the q -> 0 corner usable).
    double amp = 0;
    const VectorXd& x_ss = m.provenance().x_ss;
    for (int it = 0; it < 64; ++it)
        amp = std::max(amp, (m.orbit_point(2.0 * kPi * it / 64, q) - x_ss).norm());
    const double tol = opt.neighborhood_rel * amp + 1e-8 * (1.0 + x.norm());
    if (r.norm() > tol) {
        std::ostringstream os;
        os << "state is not within the family neighbourhood: nearest orbit point at q = ("
           << q.transpose() << "), theta = " << theta << " leaves a residual of " << r.norm()
           << " against an orbit amplitude of " << amp;
        throw FamilyRangeError(os.str());
    }

    ReducedState s;
    s.theta = wrap_2pi(theta);
    s.q = q;
    s.psi.resize(int(m.retained().size()));
    const VectorXd dx = x - m.orbit_point(s.theta, q);
    for (size_t ri = 0; ri < m.retained().size(); ++ri) {
        const VectorXcd I = m.mode_I(m.retained()[ri], s.theta, q);
        s.psi[int(ri)] = bilinear(I.head(int(x.size())), dx);
    }
    return s;
}

} // namespace apr
