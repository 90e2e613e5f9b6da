#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace altirl {

using Index = Eigen::Index;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + exp(-x));
  }
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
inline Scalar logit(Scalar p) {
  using std::log;
  return log(p) - log(Scalar(1) - p);
}

// Row-wise log-sum-exp of a dense matrix.
template <typename Derived>
VectorX<typename Derived::Scalar> logsumexp_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> out(x.rows());
  for (Index s = 0; s < x.rows(); ++s) {
    const Scalar m = x.row(s).maxCoeff();
    out(s) = m + std::log((x.row(s).array() - m).exp().sum());
  }
  return out;
}

// Row-wise softmax of `scale * x`.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x,
                                               typename Derived::Scalar scale = 1) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(x.rows(), x.cols());
  for (Index s = 0; s < x.rows(); ++s) {
    const auto row = (scale * x.row(s)).eval();
    const Scalar m = row.maxCoeff();
    out.row(s) = (row.array() - m).exp().matrix();
    out.row(s) /= out.row(s).sum();
  }
  return out;
}

// Shannon entropy of every row, with 0 log 0 = 0.
template <typename Derived>
VectorX<typename Derived::Scalar> entropy_rows(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> out = VectorX<Scalar>::Zero(p.rows());
  for (Index s = 0; s < p.rows(); ++s) {
    for (Index a = 0; a < p.cols(); ++a) {
      const Scalar v = p(s, a);
      if (v > Scalar(0)) out(s) -= v * std::log(v);
    }
  }
  return out;
}

// KL(p(s,.) || q(s,.)) for every row. Returns +inf for rows where p puts
// mass on an entry that q does not.
template <typename DerivedP, typename DerivedQ>
Eigen::VectorXd kl_rows(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p.rows());
  for (Index s = 0; s < p.rows(); ++s) {
    for (Index a = 0; a < p.cols(); ++a) {
      const double pv = p(s, a);
      if (pv <= 0.0) continue;
      const double qv = q(s, a);
      if (qv <= 0.0) {
        out(s) = kInf;
        break;
      }
      out(s) += pv * (std::log(pv) - std::log(qv));
    }
  }
  return out;
}

// Splits a flattened joint action into per-seat actions.
// Seat 0 is the slowest-varying digit.
class JointActionCodec {
 public:
  JointActionCodec() = default;
  JointActionCodec(int num_actions, int num_players);

  int num_actions() const { return num_actions_; }
  int num_players() const { return num_players_; }
  Index size() const { return size_; }

  int action(Index joint, int seat) const { return table_[static_cast<std::size_t>(joint * num_players_ + seat)]; }
  Index stride(int seat) const { return strides_[static_cast<std::size_t>(seat)]; }
  Index encode(const std::vector<int>& actions) const;
  std::vector<int> decode(Index joint) const;

 private:
  int num_actions_ = 0;
  int num_players_ = 0;
  Index size_ = 0;
  std::vector<Index> strides_;
  std::vector<int> table_;
};

}  // namespace altirl
