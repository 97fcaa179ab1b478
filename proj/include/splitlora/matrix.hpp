#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace splitlora {

class SeededRng;

/// Dense row-major matrix of 64-bit floats.
///
/// Matrices behave as values: operations return new instances and never
/// alias their inputs. Every public operation leaves all entries finite.
/// A default-constructed matrix is the empty (0x0) sentinel used for
/// optional slots; arithmetic rejects it.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);  // zero-filled

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    double operator()(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return entries_[i * cols_ + j]; }

    const double* data() const { return entries_.data(); }
    double* data() { return entries_.data(); }
    const std::vector<double>& entries() const { return entries_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    /// Exact representation equality (distinguishes -0.0 from +0.0).
    bool bitwise_equal(const Matrix& other) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> entries_;
};

/// Standard product. Each output entry accumulates a(i,k)*b(k,j) over k in
/// ascending order, so results are bitwise reproducible across runs.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double factor);
Matrix hadamard(const Matrix& a, const Matrix& b);

/// acc += x, elementwise.
void add_in_place(Matrix& acc, const Matrix& x);
/// acc += factor * x, elementwise (one product and one add per entry).
void add_scaled_in_place(Matrix& acc, double factor, const Matrix& x);

/// Rows [begin, end) as a new matrix.
Matrix row_block(const Matrix& a, std::size_t begin, std::size_t end);
/// Vertical concatenation in the given order.
Matrix vstack(std::span<const Matrix> parts);

/// Throws NumericError if any entry is NaN or infinite.
void check_finite(const Matrix& a, const char* what);

/// Entries drawn i.i.d. Normal(0, sigma^2) from rng, filled in row-major
/// order. sigma may be zero (degenerate all-zero draw).
Matrix gaussian_init(std::size_t rows, std::size_t cols, double sigma, SeededRng& rng);

}  // namespace splitlora
