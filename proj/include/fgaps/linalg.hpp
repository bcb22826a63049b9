#pragma once

#include <Eigen/Dense>

namespace fgaps::linalg {

struct PowerOptions {
  // Stop when 1 - |cos| between successive iterates drops below this.
  double tol = 1e-10;
  int max_iterations = 10000;
};

struct EigenPair {
  double value = 0.0;
  Eigen::VectorXd vector;
  int iterations = 0;
};

/// Dominant eigenpair of a symmetric positive semi-definite matrix.
///
/// The operator is first sharpened by repeated normalized squaring
/// (A <- A^2 / |A^2|_F), which raises the eigenvalue ratio to the power 2^k
/// and lets plain power iteration converge even when the top two eigenvalues
/// are close. Power iteration on the original matrix then polishes the
/// estimate. `init` seeds the iteration; a zero or orthogonal seed falls back
/// to the largest column of the sharpened operator.
///
/// Throws NoConvergence when the polish exceeds `max_iterations`.
EigenPair dominant_eigenpair(const Eigen::MatrixXd& sym, const Eigen::VectorXd& init,
                             const PowerOptions& opts = {});

/// Largest eigenvalue of sym after removing the given eigenpair; 0 for rank one.
double second_eigenvalue(const Eigen::MatrixXd& sym, const EigenPair& top,
                         const PowerOptions& opts = {});

/// Operator 2-norm, estimated from the dominant eigenvalue of W^T W.
double spectral_norm(const Eigen::MatrixXd& w, const PowerOptions& opts = {});

}  // namespace fgaps::linalg
