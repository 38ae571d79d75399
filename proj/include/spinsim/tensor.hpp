#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spinsim {

using cdouble = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
// Row-major view type matching DenseTensor's memory layout.
using CMatRM = Eigen::Matrix<cdouble, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense complex tensor of arbitrary rank, row-major (last index fastest).
class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(element_count(shape_), cdouble{0.0, 0.0}) {}

  DenseTensor(std::vector<std::size_t> shape, std::vector<cdouble> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_))
      throw std::invalid_argument("DenseTensor: data size does not match shape");
  }

  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::vector<cdouble>& data() { return data_; }
  const std::vector<cdouble>& data() const { return data_; }

  cdouble& at(std::initializer_list<std::size_t> idx) { return data_[flatten(idx)]; }
  const cdouble& at(std::initializer_list<std::size_t> idx) const { return data_[flatten(idx)]; }

  // Same data, new shape; total element count must be preserved.
  DenseTensor reshape(std::vector<std::size_t> new_shape) const {
    if (element_count(new_shape) != data_.size())
      throw std::invalid_argument("reshape: element count mismatch");
    return DenseTensor(std::move(new_shape), data_);
  }

  // Axis permutation with numpy transpose semantics: out.shape[k] = shape[perm[k]].
  DenseTensor permute(const std::vector<std::size_t>& perm) const {
    const std::size_t r = rank();
    if (perm.size() != r) throw std::invalid_argument("permute: wrong permutation length");
    std::vector<bool> used(r, false);
    for (std::size_t p : perm) {
      if (p >= r || used[p]) throw std::invalid_argument("permute: not a permutation");
      used[p] = true;
    }
    bool identity = true;
    for (std::size_t k = 0; k < r; ++k) identity = identity && perm[k] == k;
    if (identity) return *this;

    std::vector<std::size_t> new_shape(r);
    for (std::size_t k = 0; k < r; ++k) new_shape[k] = shape_[perm[k]];

    const std::vector<std::size_t> src_strides = strides(shape_);
    // Stride to advance in the source when destination index k increments.
    std::vector<std::size_t> walk(r);
    for (std::size_t k = 0; k < r; ++k) walk[k] = src_strides[perm[k]];

    DenseTensor out(new_shape);
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < data_.size(); ++flat) {
      out.data_[flat] = data_[src];
      for (std::size_t k = r; k-- > 0;) {
        src += walk[k];
        if (++idx[k] < new_shape[k]) break;
        src -= walk[k] * new_shape[k];
        idx[k] = 0;
      }
    }
    return out;
  }

  // View the tensor as a matrix with the first `row_axes` axes fused into rows.
  // No copy: row-major data already has that layout.
  Eigen::Map<const CMatRM> matrix_view(std::size_t row_axes) const {
    if (row_axes > rank()) throw std::invalid_argument("matrix_view: too many row axes");
    std::size_t rows = 1, cols = 1;
    for (std::size_t k = 0; k < rank(); ++k) (k < row_axes ? rows : cols) *= shape_[k];
    return Eigen::Map<const CMatRM>(data_.data(), rows, cols);
  }

  bool all_finite() const {
    for (const cdouble& v : data_)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  static std::vector<std::size_t> strides(const std::vector<std::size_t>& shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t k = shape.size(); k-- > 1;) s[k - 1] = s[k] * shape[k];
    return s;
  }

 private:
  std::size_t flatten(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != rank()) throw std::invalid_argument("at: wrong index rank");
    const std::vector<std::size_t> s = strides(shape_);
    std::size_t flat = 0, k = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[k]) throw std::out_of_range("at: index out of range");
      flat += i * s[k++];
    }
    return flat;
  }

  std::vector<std::size_t> shape_;
  std::vector<cdouble> data_;
};

// Pairwise contraction: pairs[k] = {axis of a, axis of b} summed together.
// Result carries a's free axes (original order) then b's free axes.
inline DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<bool> a_used(a.rank(), false), b_used(b.rank(), false);
  for (const auto& [ai, bi] : pairs) {
    if (ai >= a.rank() || bi >= b.rank())
      throw std::invalid_argument("contract: axis out of range");
    if (a_used[ai] || b_used[bi])
      throw std::invalid_argument("contract: repeated contraction axis");
    if (a.dim(ai) != b.dim(bi))
      throw std::invalid_argument("contract: dimension mismatch on axes " + std::to_string(ai) +
                                  "," + std::to_string(bi));
    a_used[ai] = true;
    b_used[bi] = true;
  }

  std::vector<std::size_t> a_perm, b_perm;
  std::vector<std::size_t> out_shape;
  for (std::size_t k = 0; k < a.rank(); ++k)
    if (!a_used[k]) {
      a_perm.push_back(k);
      out_shape.push_back(a.dim(k));
    }
  std::size_t contracted = 1;
  for (const auto& [ai, bi] : pairs) {
    a_perm.push_back(ai);
    contracted *= a.dim(ai);
  }
  for (const auto& [ai, bi] : pairs) b_perm.push_back(bi);
  for (std::size_t k = 0; k < b.rank(); ++k)
    if (!b_used[k]) {
      b_perm.push_back(k);
      out_shape.push_back(b.dim(k));
    }

  const DenseTensor ap = a.permute(a_perm);
  const DenseTensor bp = b.permute(b_perm);
  const std::size_t m = ap.size() / contracted;
  const std::size_t n = bp.size() / contracted;

  DenseTensor out(out_shape);
  Eigen::Map<const CMatRM> am(ap.data().data(), m, contracted);
  Eigen::Map<const CMatRM> bm(bp.data().data(), contracted, n);
  Eigen::Map<CMatRM> om(out.data().data(), m, n);
  om.noalias() = am * bm;
  return out;
}

struct TruncationPolicy {
  double epsilon = 0.0;    // relative discarded squared weight bound
  std::size_t chi_max = 0; // 0 means no cap

  void validate() const {
    if (!(epsilon >= 0.0) || epsilon >= 1.0)
      throw std::invalid_argument("TruncationPolicy: epsilon must lie in [0, 1)");
  }
};

struct SvdResult {
  CMat u;                         // m x r
  std::vector<double> singular_values;  // length r, descending
  CMat vh;                        // r x n
  double discarded_weight = 0.0;  // relative: sum of dropped s^2 over total
  bool limited_by_epsilon = false;
  bool limited_by_chi = false;

  std::size_t rank() const { return singular_values.size(); }
};

// Thin SVD followed by truncation. Kept rank is the smallest r whose relative
// discarded squared weight (summed from the smallest values) stays within
// epsilon, then capped at chi_max; at least one value is always kept.
inline SvdResult svd_truncate(const Eigen::Ref<const CMat>& m, const TruncationPolicy& policy) {
  policy.validate();
  if (m.rows() == 0 || m.cols() == 0) throw std::invalid_argument("svd_truncate: empty matrix");
  if (!m.allFinite()) throw std::domain_error("svd_truncate: non-finite input");

  Eigen::BDCSVD<CMat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const std::size_t full = static_cast<std::size_t>(s.size());

  // suffix[r] = sum of s_i^2 for i >= r, accumulated smallest-first.
  std::vector<double> suffix(full + 1, 0.0);
  for (std::size_t i = full; i-- > 0;) suffix[i] = suffix[i + 1] + s[i] * s[i];
  const double total = suffix[0];
  if (total <= 0.0) throw std::domain_error("svd_truncate: zero matrix");

  std::size_t r_eps = full;
  for (std::size_t r = 1; r <= full; ++r) {
    if (suffix[r] <= policy.epsilon * total) {
      r_eps = r;
      break;
    }
  }
  std::size_t r = r_eps;
  bool chi_hit = false;
  if (policy.chi_max > 0 && r > policy.chi_max) {
    r = policy.chi_max;
    chi_hit = true;
  }

  SvdResult out;
  out.u = svd.matrixU().leftCols(r);
  out.vh = svd.matrixV().leftCols(r).adjoint();
  out.singular_values.assign(s.data(), s.data() + r);
  out.discarded_weight = suffix[r] / total;
  out.limited_by_chi = chi_hit;
  out.limited_by_epsilon = !chi_hit && r < full;
  if (!out.u.allFinite() || !out.vh.allFinite())
    throw std::domain_error("svd_truncate: non-finite output");
  return out;
}

// Thin QR: A (m x n) = Q (m x k) R (k x n), k = min(m, n).
inline std::pair<CMat, CMat> qr_thin(const Eigen::Ref<const CMat>& a) {
  const Eigen::Index k = std::min(a.rows(), a.cols());
  Eigen::HouseholderQR<CMat> qr(a);
  CMat q = qr.householderQ() * CMat::Identity(a.rows(), k);
  CMat r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return {std::move(q), std::move(r)};
}

// Thin LQ: A (m x n) = L (m x k) Q (k x n), k = min(m, n), Q row-orthonormal.
inline std::pair<CMat, CMat> lq_thin(const Eigen::Ref<const CMat>& a) {
  auto [q, r] = qr_thin(a.adjoint());
  return {r.adjoint(), q.adjoint()};
}

}  // namespace spinsim
