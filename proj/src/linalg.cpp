#include "fgaps/linalg.hpp"

#include <cmath>
#include <string>

#include "fgaps/errors.hpp"

namespace fgaps::linalg {
namespace {

constexpr int kMaxSquarings = 64;

Eigen::MatrixXd sharpen(const Eigen::MatrixXd& sym) {
  Eigen::MatrixXd a = sym / sym.norm();
  for (int k = 0; k < kMaxSquarings; ++k) {
    Eigen::MatrixXd next = a * a;
    next = 0.5 * (next + next.transpose());
    const double n = next.norm();
    if (n == 0.0 || !std::isfinite(n)) break;
    next /= n;
    const double change = (next - a).norm();
    a = std::move(next);
    if (change < 1e-14) break;
  }
  return a;
}

}  // namespace

EigenPair dominant_eigenpair(const Eigen::MatrixXd& sym, const Eigen::VectorXd& init,
                             const PowerOptions& opts) {
  const Eigen::Index d = sym.rows();
  EigenPair out;
  if (d == 0 || sym.norm() == 0.0) {
    out.vector = Eigen::VectorXd::Zero(d);
    if (d > 0) out.vector(0) = 1.0;
    return out;
  }

  const Eigen::MatrixXd sharp = sharpen(sym);
  Eigen::VectorXd v = init.size() == d ? Eigen::VectorXd(sharp * init) : Eigen::VectorXd::Zero(d);
  if (!(v.norm() > 1e-8 * (init.size() == d ? init.norm() : 0.0))) {
    Eigen::Index best = 0;
    sharp.colwise().norm().maxCoeff(&best);
    v = sharp.col(best);
  }
  v.normalize();

  for (int it = 1; it <= opts.max_iterations; ++it) {
    Eigen::VectorXd next = sym * v;
    const double n = next.norm();
    if (n == 0.0) {
      out.vector = v;
      out.value = 0.0;
      out.iterations = it;
      return out;
    }
    next /= n;
    const double cos = std::abs(next.dot(v));
    v = std::move(next);
    if (1.0 - cos < opts.tol) {
      out.vector = v;
      out.value = v.dot(sym * v);
      out.iterations = it;
      return out;
    }
  }
  throw Error(Errc::NoConvergence,
              "power iteration did not reach tolerance within " +
                  std::to_string(opts.max_iterations) + " iterations");
}

double second_eigenvalue(const Eigen::MatrixXd& sym, const EigenPair& top,
                         const PowerOptions& opts) {
  if (sym.rows() < 2) return 0.0;
  Eigen::MatrixXd deflated = sym - top.value * top.vector * top.vector.transpose();
  deflated = 0.5 * (deflated + deflated.transpose());
  if (deflated.norm() <= 1e-13 * std::max(1.0, std::abs(top.value))) return 0.0;
  const EigenPair second = dominant_eigenpair(deflated, Eigen::VectorXd(), opts);
  return second.value;
}

double spectral_norm(const Eigen::MatrixXd& w, const PowerOptions& opts) {
  if (w.size() == 0) return 0.0;
  const Eigen::MatrixXd gram = w.transpose() * w;
  const EigenPair top = dominant_eigenpair(gram, Eigen::VectorXd(), opts);
  // |W v| is more accurate than sqrt of the Rayleigh quotient for tiny norms.
  return (w * top.vector).norm();
}

}  // namespace fgaps::linalg
