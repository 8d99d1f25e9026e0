#pragma once

#include "nsbo/common.hpp"

#include <vector>

namespace nsbo {

/// Ordered set of (input, observation) pairs on the centered hypercube
/// [-1, 1]^D. Inputs are stored as rows.
class EvidenceSet {
 public:
  explicit EvidenceSet(int dim) : dim_(dim), inputs_(0, dim) {
    if (dim <= 0) throw ConfigError("EvidenceSet: dimension must be positive");
  }

  int dim() const { return dim_; }
  Eigen::Index size() const { return inputs_.rows(); }
  bool empty() const { return inputs_.rows() == 0; }

  const Matrix& inputs() const { return inputs_; }
  const Vector& outputs() const { return outputs_; }
  Vector point(Eigen::Index i) const { return inputs_.row(i).transpose(); }
  double output(Eigen::Index i) const { return outputs_[i]; }

  void add(const Vector& x, double y) {
    if (x.size() != dim_)
      throw ConfigError("EvidenceSet: point dimension mismatch");
    for (Eigen::Index d = 0; d < x.size(); ++d) {
      if (!std::isfinite(x[d]) || x[d] < -1.0 - 1e-12 || x[d] > 1.0 + 1e-12)
        throw ConfigError("EvidenceSet: coordinate outside [-1, 1]");
    }
    inputs_.conservativeResize(inputs_.rows() + 1, Eigen::NoChange);
    inputs_.row(inputs_.rows() - 1) = x.transpose();
    outputs_.conservativeResize(outputs_.size() + 1);
    outputs_[outputs_.size() - 1] = y;
  }

  /// Index of the smallest observation (first on ties).
  Eigen::Index argmin() const {
    if (empty()) throw ConfigError("EvidenceSet: argmin of empty set");
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < outputs_.size(); ++i)
      if (outputs_[i] < outputs_[best]) best = i;
    return best;
  }

 private:
  int dim_;
  Matrix inputs_;
  Vector outputs_;
};

}  // namespace nsbo
