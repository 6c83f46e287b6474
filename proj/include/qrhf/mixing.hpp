#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>

#include "qrhf/fields.hpp"

namespace qrhf {

// Anderson (type II) mixing for x = g(x), with residual f = g(x) - x. Vectors are expected in
// coordinates where the Euclidean product is the physical one.
class AndersonMixer {
 public:
  AndersonMixer(int depth, double beta) : depth_(depth), beta_(beta) {}

  Eigen::VectorXd next(const Eigen::VectorXd& x, const Eigen::VectorXd& f) {
    xs_.push_back(x);
    fs_.push_back(f);
    while (static_cast<int>(xs_.size()) > depth_ + 1) {
      xs_.pop_front();
      fs_.pop_front();
    }
    Eigen::VectorXd out = x + beta_ * f;
    const int h = static_cast<int>(xs_.size()) - 1;
    if (depth_ > 0 && h >= 1) {
      Eigen::MatrixXd dX(x.size(), h), dF(x.size(), h);
      for (int c = 0; c < h; ++c) {
        dX.col(c) = xs_[c + 1] - xs_[c];
        dF.col(c) = fs_[c + 1] - fs_[c];
      }
      Eigen::VectorXd gamma = dF.colPivHouseholderQr().solve(f);
      out -= (dX + beta_ * dF) * gamma;
    }
    return out;
  }

 private:
  int depth_;
  double beta_;
  std::deque<Eigen::VectorXd> xs_, fs_;
};

// f(i, j) sqrt(dx w_j), flattened with the radial index fastest; and back.
inline Eigen::VectorXd weighted_vector(const ScalarField& f) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(f.n_x()) * f.n_r());
  for (int i = 0; i < f.n_x(); ++i)
    for (int j = 0; j < f.n_r(); ++j) v(i * f.n_r() + j) = f(i, j) * std::sqrt(f.cell_weight(j));
  return v;
}

inline void assign_weighted(const Eigen::VectorXd& v, ScalarField& f) {
  for (int i = 0; i < f.n_x(); ++i)
    for (int j = 0; j < f.n_r(); ++j) f(i, j) = v(i * f.n_r() + j) / std::sqrt(f.cell_weight(j));
}

}  // namespace qrhf
