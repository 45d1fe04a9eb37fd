#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace apr {

/** Trigonometric interpolant of periodic data sampled on the uniform grid
 *  theta_k = 2*pi*k/n, k = 0..n-1. Columns of the sample matrix are
 *  interpolated jointly: eval(theta) returns one value per column.
 *
 *  Coefficients live on harmonics m = -M..M; for even n the Nyquist
 *  coefficient is split evenly between +n/2 and -n/2 so that real input
 *  yields a real interpolant. */
class FourierInterp {
  public:
    FourierInterp() = default;

    static FourierInterp fit(const Eigen::MatrixXcd& samples);
    static FourierInterp fit(const Eigen::MatrixXd& samples);

    Eigen::VectorXcd eval(double theta) const;
    Eigen::VectorXd eval_real(double theta) const;

    /** Term-by-term derivative d/dtheta. */
    FourierInterp derivative() const;

    /** Drop harmonics whose coefficient rows are below rel_tol times the
     *  largest row (by max-abs). The m=0 row is always kept. */
    FourierInterp truncated(double rel_tol) const;

    int cols() const { return int(coef_.cols()); }
    int n_harmonics() const { return int(ms_.size()); }
    const std::vector<int>& harmonics() const { return ms_; }
    const Eigen::MatrixXcd& coef() const { return coef_; }

  private:
    std::vector<int> ms_;    // harmonic indices, ascending
    Eigen::MatrixXcd coef_;  // n_harmonics x cols
};

/** Full coefficient table c_m = (1/n) sum_k f_k exp(-i m theta_k) for
 *  m = -M..M (Nyquist split for even n). Row i corresponds to harmonic
 *  ms[i]. Used directly when coefficients are interpolated across a
 *  family. */
void fourier_coefficients(const Eigen::MatrixXcd& samples, std::vector<int>& ms,
                          Eigen::MatrixXcd& coef);

} // namespace apr
