#pragma once

// Row-compressed matrices over exact dyadic entries with a double mirror.
// Compiled networks are block structured and mostly zero, so entries are
// stored by row; the dense view is available on request.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <vector>

#include "forge/error.hpp"
#include "forge/fixed_scalar.hpp"

namespace forge {

struct Triplet {
  std::size_t row;
  std::size_t col;
  FixedScalar value;
};

class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  // Duplicate coordinates are summed; zero entries are dropped.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
      detail::require(t.row < rows && t.col < cols, "matrix entry out of range");
    }
    std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    SparseMatrix out(rows, cols);
    std::size_t i = 0;
    while (i < triplets.size()) {
      std::size_t j = i;
      FixedScalar sum;
      while (j < triplets.size() && triplets[j].row == triplets[i].row && triplets[j].col == triplets[i].col) {
        sum += triplets[j].value;
        ++j;
      }
      if (!sum.is_zero()) {
        out.col_idx_.push_back(triplets[i].col);
        out.values_.push_back(std::move(sum));
        out.row_ptr_[triplets[i].row + 1]++;
      }
      i = j;
    }
    std::partial_sum(out.row_ptr_.begin(), out.row_ptr_.end(), out.row_ptr_.begin());
    out.refresh_mirror();
    return out;
  }

  // Row-major dense input.
  static SparseMatrix from_dense(std::size_t rows, std::size_t cols, const std::vector<FixedScalar>& entries) {
    detail::require(entries.size() == rows * cols, "dense matrix has wrong number of entries");
    std::vector<Triplet> triplets;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const auto& v = entries[r * cols + c];
        if (!v.is_zero()) triplets.push_back({r, c, v});
      }
    }
    return from_triplets(rows, cols, std::move(triplets));
  }

  static SparseMatrix identity(std::size_t n, const FixedScalar& scale = FixedScalar(1)) {
    std::vector<Triplet> triplets;
    for (std::size_t i = 0; i < n; ++i) triplets.push_back({i, i, scale});
    return from_triplets(n, n, std::move(triplets));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nonzeros() const { return values_.size(); }

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const { return col_idx_; }
  const std::vector<FixedScalar>& values() const { return values_; }
  const std::vector<double>& values_double() const { return mirror_; }

  FixedScalar at(std::size_t r, std::size_t c) const {
    const auto begin = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
    const auto end = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
    const auto it = std::lower_bound(begin, end, c);
    if (it == end || *it != c) return {};
    return values_[static_cast<std::size_t>(it - col_idx_.begin())];
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(values_.size());
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) out.push_back({r, col_idx_[p], values_[p]});
    }
    return out;
  }

  std::vector<FixedScalar> to_dense() const {
    std::vector<FixedScalar> out(rows_ * cols_);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) out[r * cols_ + col_idx_[p]] = values_[p];
    }
    return out;
  }

  Eigen::MatrixXd to_eigen() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_idx_[p])) = mirror_[p];
      }
    }
    return out;
  }

  SparseMatrix transpose() const {
    std::vector<Triplet> t;
    for (auto& e : triplets()) t.push_back({e.col, e.row, e.value});
    return from_triplets(cols_, rows_, std::move(t));
  }

  SparseMatrix scaled(const FixedScalar& s) const {
    SparseMatrix out = *this;
    for (auto& v : out.values_) v *= s;
    if (s.is_zero()) return SparseMatrix::from_triplets(rows_, cols_, {});
    out.refresh_mirror();
    return out;
  }

  // Largest bit complexity over the entries.
  unsigned bit_complexity() const {
    unsigned tau = 0;
    for (const auto& v : values_) tau = std::max(tau, v.bit_complexity());
    return tau;
  }

  bool all_finite_mirror() const {
    return std::all_of(mirror_.begin(), mirror_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  void refresh_mirror() {
    mirror_.resize(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) mirror_[i] = values_[i].to_double();
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<FixedScalar> values_;
  std::vector<double> mirror_;
};

// Exact product a * b.
inline SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b) {
  detail::require(a.cols() == b.rows(), "matrix product dimension mismatch");
  std::vector<Triplet> out;
  const auto& ap = a.row_ptr();
  const auto& bp = b.row_ptr();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::map<std::size_t, FixedScalar> acc;
    for (std::size_t p = ap[r]; p < ap[r + 1]; ++p) {
      const std::size_t k = a.col_idx()[p];
      for (std::size_t q = bp[k]; q < bp[k + 1]; ++q) acc[b.col_idx()[q]].add_product(a.values()[p], b.values()[q]);
    }
    for (auto& [c, v] : acc) {
      v.canonicalize();
      if (!v.is_zero()) out.push_back({r, c, std::move(v)});
    }
  }
  return SparseMatrix::from_triplets(a.rows(), b.cols(), std::move(out));
}

// [a; b] stacked vertically.
inline SparseMatrix vstack(const std::vector<const SparseMatrix*>& parts) {
  detail::require(!parts.empty(), "vstack of nothing");
  const std::size_t cols = parts.front()->cols();
  std::vector<Triplet> t;
  std::size_t offset = 0;
  for (const auto* m : parts) {
    detail::require(m->cols() == cols, "vstack column mismatch");
    for (auto& e : m->triplets()) t.push_back({e.row + offset, e.col, e.value});
    offset += m->rows();
  }
  return SparseMatrix::from_triplets(offset, cols, std::move(t));
}

inline SparseMatrix block_diag(const std::vector<const SparseMatrix*>& parts) {
  std::vector<Triplet> t;
  std::size_t row_off = 0;
  std::size_t col_off = 0;
  for (const auto* m : parts) {
    for (auto& e : m->triplets()) t.push_back({e.row + row_off, e.col + col_off, e.value});
    row_off += m->rows();
    col_off += m->cols();
  }
  return SparseMatrix::from_triplets(row_off, col_off, std::move(t));
}

// [a, b] concatenated horizontally.
inline SparseMatrix hstack(const std::vector<const SparseMatrix*>& parts) {
  detail::require(!parts.empty(), "hstack of nothing");
  const std::size_t rows = parts.front()->rows();
  std::vector<Triplet> t;
  std::size_t offset = 0;
  for (const auto* m : parts) {
    detail::require(m->rows() == rows, "hstack row mismatch");
    for (auto& e : m->triplets()) t.push_back({e.row, e.col + offset, e.value});
    offset += m->cols();
  }
  return SparseMatrix::from_triplets(rows, offset, std::move(t));
}

namespace detail {

inline std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

// Largest singular value of a dense block, from the smaller Gram matrix.
inline double dense_spectral_norm(const Eigen::MatrixXd& block) {
  if (block.size() == 0) return 0.0;
  const Eigen::MatrixXd gram =
      block.rows() <= block.cols() ? Eigen::MatrixXd(block * block.transpose()) : Eigen::MatrixXd(block.transpose() * block);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
}

}  // namespace detail

// Upper bound on the spectral norm. The matrix is split into connected blocks
// (the norm is the max over blocks); each block uses an eigen-decomposition of
// its smaller Gram matrix when that side has at most `dense_limit` entries and
// the rigorous bound min(||A||_F, sqrt(||A||_1 ||A||_inf)) otherwise. A small
// relative inflation covers floating-point error.
inline double operator_norm_bound(const SparseMatrix& a, std::size_t dense_limit = 600) {
  const std::size_t n_rows = a.rows();
  const std::size_t n_nodes = a.rows() + a.cols();
  if (a.nonzeros() == 0) return 0.0;
  std::vector<std::size_t> parent(n_nodes);
  std::iota(parent.begin(), parent.end(), 0);
  const auto& rp = a.row_ptr();
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t p = rp[r]; p < rp[r + 1]; ++p) {
      const std::size_t x = detail::find_root(parent, r);
      const std::size_t y = detail::find_root(parent, n_rows + a.col_idx()[p]);
      if (x != y) parent[x] = y;
    }
  }
  std::map<std::size_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> blocks;
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (rp[r] == rp[r + 1]) continue;
    blocks[detail::find_root(parent, r)].first.push_back(r);
  }
  for (std::size_t c = 0; c < a.cols(); ++c) blocks[detail::find_root(parent, n_rows + c)].second.push_back(c);

  double best = 0.0;
  const auto& vals = a.values_double();
  for (auto& [root, rc] : blocks) {
    auto& [rows, cols] = rc;
    if (rows.empty()) continue;
    std::map<std::size_t, Eigen::Index> col_pos;
    for (std::size_t i = 0; i < cols.size(); ++i) col_pos[cols[i]] = static_cast<Eigen::Index>(i);
    double norm = 0.0;
    if (std::min(rows.size(), cols.size()) <= dense_limit &&
        static_cast<double>(rows.size()) * static_cast<double>(cols.size()) <= 4e7) {
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t p = rp[rows[i]]; p < rp[rows[i] + 1]; ++p) block(static_cast<Eigen::Index>(i), col_pos[a.col_idx()[p]]) = vals[p];
      }
      norm = detail::dense_spectral_norm(block);
    } else {
      double frob = 0.0;
      double max_row = 0.0;
      std::map<std::size_t, double> col_sums;
      for (std::size_t r : rows) {
        double row_sum = 0.0;
        for (std::size_t p = rp[r]; p < rp[r + 1]; ++p) {
          frob += vals[p] * vals[p];
          row_sum += std::abs(vals[p]);
          col_sums[a.col_idx()[p]] += std::abs(vals[p]);
        }
        max_row = std::max(max_row, row_sum);
      }
      double max_col = 0.0;
      for (auto& [c, s] : col_sums) max_col = std::max(max_col, s);
      norm = std::min(std::sqrt(frob), std::sqrt(max_row * max_col));
    }
    best = std::max(best, norm);
  }
  return best * (1.0 + 1e-9) + 1e-300;
}

// Smallest singular value of a dense matrix (min(rows, cols)-th singular value).
inline double sigma_min(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues().minCoeff();
}

}  // namespace forge
