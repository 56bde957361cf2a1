#include "bigcn/numerics.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "bigcn/errors.h"

namespace bigcn {
namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

[[noreturn]] void shape_mismatch(const char* op, std::size_t ar,
                                 std::size_t ac, std::size_t br,
                                 std::size_t bc) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_str(ar, ac) + " and " + shape_str(br, bc));
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("DenseMatrix: data length " +
                     std::to_string(data_.size()) + " does not match " +
                     shape_str(rows, cols));
  }
}

DenseMatrix::DenseMatrix(
    std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("DenseMatrix: ragged rows");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols,
                           std::vector<Triplet> entries)
    : rows_(rows), cols_(cols) {
  for (const auto& e : entries) {
    if (e.row >= rows || e.col >= cols) {
      throw ShapeError("SparseMatrix: entry (" + std::to_string(e.row) +
                       ", " + std::to_string(e.col) + ") outside " +
                       shape_str(rows, cols));
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const Triplet& a, const Triplet& b) {
              return a.row != b.row ? a.row < b.row : a.col < b.col;
            });
  row_offset_.assign(rows + 1, 0);
  col_index_.reserve(entries.size());
  value_.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (k > 0 && entries[k].row == entries[k - 1].row &&
        entries[k].col == entries[k - 1].col) {
      throw InputError("SparseMatrix: duplicate entry (" +
                       std::to_string(entries[k].row) + ", " +
                       std::to_string(entries[k].col) + ")");
    }
    ++row_offset_[entries[k].row + 1];
    col_index_.push_back(entries[k].col);
    value_.push_back(entries[k].value);
  }
  for (std::size_t r = 0; r < rows; ++r) row_offset_[r + 1] += row_offset_[r];
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<Triplet> entries;
  entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) entries.push_back({i, i, 1.0});
  return SparseMatrix(n, n, std::move(entries));
}

SparseMatrix SparseMatrix::from_dense(const DenseMatrix& dense) {
  std::vector<Triplet> entries;
  for (std::size_t r = 0; r < dense.rows(); ++r) {
    for (std::size_t c = 0; c < dense.cols(); ++c) {
      if (dense(r, c) != 0.0) entries.push_back({r, c, dense(r, c)});
    }
  }
  return SparseMatrix(dense.rows(), dense.cols(), std::move(entries));
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto begin = col_index_.begin() + row_offset_[r];
  const auto end = col_index_.begin() + row_offset_[r + 1];
  const auto it = std::lower_bound(begin, end, c);
  if (it == end || *it != c) return 0.0;
  return value_[it - col_index_.begin()];
}

bool SparseMatrix::contains(std::size_t r, std::size_t c) const {
  const auto begin = col_index_.begin() + row_offset_[r];
  const auto end = col_index_.begin() + row_offset_[r + 1];
  return std::binary_search(begin, end, c);
}

std::vector<Triplet> SparseMatrix::triplets() const {
  std::vector<Triplet> out;
  out.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offset_[r]; k < row_offset_[r + 1]; ++k) {
      out.push_back({r, col_index_[k], value_[k]});
    }
  }
  return out;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<Triplet> t = triplets();
  for (auto& e : t) std::swap(e.row, e.col);
  return SparseMatrix(cols_, rows_, std::move(t));
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offset_[r]; k < row_offset_[r + 1]; ++k) {
      out(r, col_index_[k]) = value_[k];
    }
  }
  return out;
}

DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    shape_mismatch("spmm", a.rows(), a.cols(), b.rows(), b.cols());
  }
  DenseMatrix out(a.rows(), b.cols());
  const auto offsets = a.row_offsets();
  const auto cols = a.col_indices();
  const auto vals = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
      const double v = vals[k];
      const auto src = b.row(cols[k]);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

// The kernels below skip zero multiplicands: node features are mostly
// zero TF-IDF entries and ReLU outputs are frequently zero.

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    shape_mismatch("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  }
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    const auto lhs = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double v = lhs[k];
      if (v == 0.0) continue;
      const auto src = b.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    shape_mismatch("matmul_tn", a.cols(), a.rows(), b.rows(), b.cols());
  }
  DenseMatrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto lhs = a.row(k);
    const auto src = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double v = lhs[i];
      if (v == 0.0) continue;
      auto dst = out.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    shape_mismatch("matmul_nt", a.rows(), a.cols(), b.cols(), b.rows());
  }
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto lhs = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto rhs = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < lhs.size(); ++k) acc += lhs[k] * rhs[k];
      out(i, j) = acc;
    }
  }
  return out;
}

DenseMatrix relu(const DenseMatrix& m) {
  DenseMatrix out = m;
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

DenseMatrix softmax_row(const DenseMatrix& v) {
  if (v.rows() != 1) {
    throw ShapeError("softmax_row: expected a single row, got " +
                     shape_str(v.rows(), v.cols()));
  }
  DenseMatrix out = v;
  auto x = out.values();
  if (x.empty()) return out;
  const double hi = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (double& e : x) {
    e = std::exp(e - hi);
    total += e;
  }
  for (double& e : x) e /= total;
  return out;
}

DenseMatrix mean_rows(const DenseMatrix& m) {
  if (m.rows() == 0) throw InputError("mean_rows: matrix has no rows");
  DenseMatrix out(1, m.cols());
  auto acc = out.row(0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto src = m.row(r);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += src[j];
  }
  const double n = static_cast<double>(m.rows());
  for (double& e : acc) e /= n;
  return out;
}

DenseMatrix concat_cols(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    shape_mismatch("concat_cols", a.rows(), a.cols(), b.rows(), b.cols());
  }
  DenseMatrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + a.cols());
  }
  return out;
}

DenseMatrix slice_cols(const DenseMatrix& m, std::size_t begin,
                       std::size_t end) {
  if (begin > end || end > m.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " +
                     shape_str(m.rows(), m.cols()));
  }
  DenseMatrix out(m.rows(), end - begin);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto src = m.row(r);
    std::copy(src.begin() + begin, src.begin() + end, out.row(r).begin());
  }
  return out;
}

void add_inplace(DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) {
    shape_mismatch("add_inplace", a.rows(), a.cols(), b.rows(), b.cols());
  }
  auto dst = a.values();
  const auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) {
    shape_mismatch("max_abs_diff", a.rows(), a.cols(), b.rows(), b.cols());
  }
  double worst = 0.0;
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, std::abs(x[i] - y[i]));
  }
  return worst;
}

}  // namespace bigcn
