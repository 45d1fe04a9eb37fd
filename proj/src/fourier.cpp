#include "apr/fourier.hpp"
#include "apr/errors.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace apr {

namespace {

// Cached analysis matrices W(n): row i = harmonic ms[i], W(i,k) = exp(-i m theta_k)/n
// (with the Nyquist row halved for even n so that synthesis uses both +-n/2).
struct DftTable {
    std::vector<int> ms;
    Eigen::MatrixXcd W;
};

const DftTable& dft_table(int n) {
    static std::map<int, DftTable> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    DftTable tab;
    int M = n / 2;
    for (int m = -M; m <= M; ++m) tab.ms.push_back(m);
    tab.W.resize(tab.ms.size(), n);
    for (size_t i = 0; i < tab.ms.size(); ++i) {
        int m = tab.ms[i];
        double scale = 1.0 / n;
        if (n % 2 == 0 && std::abs(m) == M) scale *= 0.5;
        for (int k = 0; k < n; ++k) {
            double ang = -2.0 * M_PI * m * k / n;
            tab.W(i, k) = std::polar(scale, ang);
        }
    }
    return cache.emplace(n, std::move(tab)).first->second;
}

} // namespace

void fourier_coefficients(const Eigen::MatrixXcd& samples, std::vector<int>& ms,
                          Eigen::MatrixXcd& coef) {
    int n = int(samples.rows());
    if (n < 2) throw ConfigError("fourier: need at least 2 samples");
    const DftTable& tab = dft_table(n);
    ms = tab.ms;
    coef.noalias() = tab.W * samples;
}

FourierInterp FourierInterp::fit(const Eigen::MatrixXcd& samples) {
    FourierInterp f;
    fourier_coefficients(samples, f.ms_, f.coef_);
    return f;
}

FourierInterp FourierInterp::fit(const Eigen::MatrixXd& samples) {
    return fit(Eigen::MatrixXcd(samples.cast<std::complex<double>>()));
}

Eigen::VectorXcd FourierInterp::eval(double theta) const {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(coef_.cols());
    for (size_t i = 0; i < ms_.size(); ++i)
        out += std::polar(1.0, ms_[i] * theta) * coef_.row(i).transpose();
    return out;
}

Eigen::VectorXd FourierInterp::eval_real(double theta) const {
    return eval(theta).real();
}

FourierInterp FourierInterp::derivative() const {
    FourierInterp d = *this;
    for (size_t i = 0; i < ms_.size(); ++i)
        d.coef_.row(i) *= std::complex<double>(0.0, double(ms_[i]));
    return d;
}

FourierInterp FourierInterp::truncated(double rel_tol) const {
    double maxrow = 0;
    for (size_t i = 0; i < ms_.size(); ++i)
        maxrow = std::max(maxrow, coef_.row(i).cwiseAbs().maxCoeff());
    double cut = rel_tol * maxrow;
    FourierInterp t;
    std::vector<int> keep;
    for (size_t i = 0; i < ms_.size(); ++i)
        if (ms_[i] == 0 || coef_.row(i).cwiseAbs().maxCoeff() > cut) keep.push_back(int(i));
    t.coef_.resize(keep.size(), coef_.cols());
    for (size_t j = 0; j < keep.size(); ++j) {
        t.ms_.push_back(ms_[keep[j]]);
        t.coef_.row(j) = coef_.row(keep[j]);
    }
    return t;
}

} // namespace apr
