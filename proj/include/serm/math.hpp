#pragma once

#include <Eigen/Core>

#include <cmath>

namespace serm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

// log(sigmoid(x)) without overflow for large |x|.
template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
  if (x >= Scalar(0)) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  const auto m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& logits) {
  const auto shifted = (logits.array() - logits.maxCoeff()).exp();
  return (shifted / shifted.sum()).matrix();
}

// Row-wise softmax of an (n x classes) logit matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax_rows(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out =
      (logits.colwise() - logits.rowwise().maxCoeff()).array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> log_softmax_rows(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> maxes = logits.rowwise().maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> shifted = logits.colwise() - maxes;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lse = shifted.array().exp().rowwise().sum().log();
  return shifted.colwise() - lse;
}

// (1 - n * floor) * p + floor: still sums to one, every entry >= floor.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> apply_floor(
    const Eigen::MatrixBase<Derived>& probs, typename Derived::Scalar floor) {
  using Scalar = typename Derived::Scalar;
  const Scalar keep = Scalar(1) - static_cast<Scalar>(probs.size()) * floor;
  return (keep * probs.array() + floor).matrix();
}

// Shannon entropy in nats; 0 * ln 0 is taken as 0.
template <typename Derived>
typename Derived::Scalar entropy(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Scalar h(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > Scalar(0)) h -= p(i) * std::log(p(i));
  }
  return h;
}

// KL(p || q) in nats. Terms with p_i = 0 contribute nothing.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_divergence(const Eigen::MatrixBase<DerivedP>& p,
                                        const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  Scalar kl(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > Scalar(0)) kl += p(i) * (std::log(p(i)) - std::log(q(i)));
  }
  return kl;
}

}  // namespace serm
