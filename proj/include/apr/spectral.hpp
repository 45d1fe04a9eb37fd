#pragma once

#include "apr/dynsys.hpp"

#include <Eigen/Dense>
#include <complex>

namespace apr {

/** One complex-conjugate eigenpair of a fixed-point Jacobian, stored for
 *  the member with positive imaginary part.
 *    ||v|| = 1 and arg(e_a^T v) = -pi for the anchor component a;
 *    w is the matching left eigenvector scaled so that w^H v = 1. */
struct SpectralMode {
    std::complex<double> lambda;
    Eigen::VectorXcd v;
    Eigen::VectorXcd w;
    int anchor_index = 0;
};

/** Complete simple spectrum of a real matrix, ordered by descending real
 *  part, ties by ascending imaginary part. Column j of right is v_j with
 *  ||v_j|| = 1 and the largest-magnitude component real negative; left is
 *  scaled so that left^H * right = I. */
struct Spectrum {
    Eigen::VectorXcd values;
    Eigen::MatrixXcd right;
    Eigen::MatrixXcd left;
};

/** Eigen-decomposition with canonical ordering and scaling. Throws
 *  NumericalError when the spectrum is not simple (minimum eigenvalue gap
 *  below 1e-8 * ||A||). */
Spectrum compute_spectrum(const Eigen::MatrixXd& A);

/** Newton iteration for F(x, 0) = 0. The converged point must be
 *  hyperbolic and asymptotically stable (all eigenvalue real parts
 *  negative), otherwise a NumericalError is thrown. */
Eigen::VectorXd find_fixed_point(const DynamicalSystem& sys, Eigen::VectorXd guess,
                                 double tol = 1e-12, int max_iter = 50);

/** Select the mode_index-th oscillatory pair (1-based, ordered as in the
 *  Spectrum) and fix its phase at anchor_index. anchor_index = -1 picks
 *  the largest-magnitude component of v. */
SpectralMode oscillatory_mode(const Spectrum& sp, int mode_index, int anchor_index = -1);

/** First-order change of (lambda, v) under A -> A + dA, preserving unit
 *  norm and the anchored phase to first order. */
std::pair<std::complex<double>, Eigen::VectorXcd>
perturb_eigenpair(const Eigen::MatrixXd& A, const Eigen::MatrixXd& dA, const SpectralMode& mode);

} // namespace apr
