#ifndef BIGCN_NUMERICS_H_
#define BIGCN_NUMERICS_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace bigcn {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Nested-list construction for literals: DenseMatrix{{1, 2}, {3, 4}}.
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Compressed-row sparse matrix with explicit values.
///
/// Entries are kept sorted by (row, col) and duplicates are rejected at
/// construction, so two matrices with the same nonzero pattern and values
/// compare equal structurally. Explicit zeros are kept if supplied.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  /// Throws ShapeError on an out-of-range index and InputError on a
  /// duplicated (row, col) pair.
  SparseMatrix(std::size_t rows, std::size_t cols,
               std::vector<Triplet> entries);

  static SparseMatrix identity(std::size_t n);
  static SparseMatrix from_dense(const DenseMatrix& dense);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return col_index_.size(); }

  std::span<const std::size_t> row_offsets() const { return row_offset_; }
  std::span<const std::size_t> col_indices() const { return col_index_; }
  std::span<const double> values() const { return value_; }

  /// Value at (r, c), or 0 when the entry is absent.
  double at(std::size_t r, std::size_t c) const;
  bool contains(std::size_t r, std::size_t c) const;

  std::vector<Triplet> triplets() const;
  SparseMatrix transpose() const;
  DenseMatrix to_dense() const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offset_{0};
  std::vector<std::size_t> col_index_;
  std::vector<double> value_;
};

/// a * b for sparse a.
DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b);
/// a * b.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// transpose(a) * b without materializing the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
/// a * transpose(b) without materializing the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix relu(const DenseMatrix& m);

/// Softmax of a single-row matrix, computed with max subtraction.
DenseMatrix softmax_row(const DenseMatrix& v);

/// Column means as a 1 x cols matrix. Throws InputError when m has no rows.
DenseMatrix mean_rows(const DenseMatrix& m);

/// [a | b]. Throws ShapeError when the row counts differ.
DenseMatrix concat_cols(const DenseMatrix& a, const DenseMatrix& b);

/// Columns [begin, end) of m.
DenseMatrix slice_cols(const DenseMatrix& m, std::size_t begin,
                       std::size_t end);

/// Adds b into a in place. Shapes must match.
void add_inplace(DenseMatrix& a, const DenseMatrix& b);

/// Largest absolute entrywise difference. Shapes must match.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace bigcn

#endif  // BIGCN_NUMERICS_H_
