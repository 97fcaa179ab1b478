#include "splitlora/matrix.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "splitlora/error.hpp"
#include "splitlora/rng.hpp"

namespace splitlora {

namespace {
std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_nonempty(const Matrix& a, const char* what) {
    if (a.empty()) {
        throw ShapeError(std::string(what) + ": empty operand");
    }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    require_nonempty(a, what);
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch, a is " + shape_str(a) +
                         ", b is " + shape_str(b));
    }
}
}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("Matrix: rows and cols must be at least 1");
    }
    entries_.assign(rows * cols, 0.0);
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0 || rows.begin()->size() == 0) {
        throw ShapeError("Matrix::from_rows: need at least one row and column");
    }
    Matrix out(rows.size(), rows.begin()->size());
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != out.cols_) {
            throw ShapeError("Matrix::from_rows: ragged rows");
        }
        std::size_t j = 0;
        for (double v : row) {
            out(i, j++) = v;
        }
        ++i;
    }
    return out;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 1.0;
    }
    return out;
}

bool Matrix::bitwise_equal(const Matrix& other) const {
    if (!same_shape(other)) {
        return false;
    }
    if (entries_.empty()) {
        return true;
    }
    return std::memcmp(entries_.data(), other.entries_.data(),
                       entries_.size() * sizeof(double)) == 0;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require_nonempty(a, "matmul");
    require_nonempty(b, "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, a is " + shape_str(a) +
                         ", b is " + shape_str(b));
    }
    const std::size_t n = a.rows();
    const std::size_t inner = a.cols();
    const std::size_t m = b.cols();
    Matrix out(n, m);
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = op + i * m;
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = ap[i * inner + k];
            const double* brow = bp + k * m;
            for (std::size_t j = 0; j < m; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    check_finite(out, "matmul");
    return out;
}

Matrix transpose(const Matrix& a) {
    require_nonempty(a, "transpose");
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    add_in_place(out, b);
    check_finite(out, "add");
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] -= b.data()[i];
    }
    check_finite(out, "sub");
    return out;
}

Matrix scaled(const Matrix& a, double factor) {
    require_nonempty(a, "scaled");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] *= factor;
    }
    check_finite(out, "scaled");
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] *= b.data()[i];
    }
    check_finite(out, "hadamard");
    return out;
}

void add_in_place(Matrix& acc, const Matrix& x) {
    require_same_shape(acc, x, "add_in_place");
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc.data()[i] += x.data()[i];
    }
}

void add_scaled_in_place(Matrix& acc, double factor, const Matrix& x) {
    require_same_shape(acc, x, "add_scaled_in_place");
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc.data()[i] += factor * x.data()[i];
    }
}

Matrix row_block(const Matrix& a, std::size_t begin, std::size_t end) {
    require_nonempty(a, "row_block");
    if (begin >= end || end > a.rows()) {
        throw ShapeError("row_block: invalid row range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") for " + shape_str(a));
    }
    Matrix out(end - begin, a.cols());
    std::memcpy(out.data(), a.data() + begin * a.cols(),
                (end - begin) * a.cols() * sizeof(double));
    return out;
}

Matrix vstack(std::span<const Matrix> parts) {
    if (parts.empty()) {
        throw ShapeError("vstack: no parts");
    }
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const Matrix& p : parts) {
        require_nonempty(p, "vstack");
        if (p.cols() != cols) {
            throw ShapeError("vstack: column mismatch, expected " + std::to_string(cols) +
                             ", got " + shape_str(p));
        }
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::size_t at = 0;
    for (const Matrix& p : parts) {
        std::memcpy(out.data() + at * cols, p.data(), p.size() * sizeof(double));
        at += p.rows();
    }
    return out;
}

void check_finite(const Matrix& a, const char* what) {
    for (double v : a.entries()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(what) + ": non-finite entry");
        }
    }
}

Matrix gaussian_init(std::size_t rows, std::size_t cols, double sigma, SeededRng& rng) {
    if (!(sigma >= 0.0)) {
        throw ParameterError("gaussian_init: sigma must be >= 0");
    }
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = sigma * rng.next_gaussian();
    }
    check_finite(out, "gaussian_init");
    return out;
}

}  // namespace splitlora
