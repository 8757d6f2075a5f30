#pragma once

// Minimal dense linear algebra used by every other component. Row-major
// double storage, deterministic accumulation order, no BLAS. Deliberately
// small: the cross-backend equivalence tests need bit-reproducible results
// more than they need speed.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "ctxlab/errors.hpp"

namespace ctxlab {

struct Vector {
    std::vector<double> data;

    Vector() = default;
    explicit Vector(std::size_t len, double fill = 0.0) : data(len, fill) {}
    Vector(std::initializer_list<double> init);          // validates finiteness
    explicit Vector(std::vector<double> values);         // validates finiteness

    std::size_t len() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    std::span<const double> span() const { return {data.data(), data.size()}; }

    bool all_finite() const;
};

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, data.size() == rows * cols

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values);  // validates
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    Vector row_vector(std::size_t r) const;

    bool all_finite() const;
};

// Boolean keep-mask for softmax_rows. keep[i*cols + j] != 0 means entry
// (i, j) participates; masked entries come out exactly 0.
struct Mask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> keep;

    Mask() = default;
    Mask(std::size_t r, std::size_t c, bool keep_all = true)
        : rows(r), cols(c), keep(r * c, keep_all ? 1 : 0) {}

    // Row i may see columns j <= i + row_offset. For a square self-attention
    // mask row_offset is 0; for a query suffix over a longer key sequence it
    // is keys - queries.
    static Mask causal(std::size_t rows, std::size_t cols, std::size_t row_offset = 0);

    bool at(std::size_t r, std::size_t c) const { return keep[r * cols + c] != 0; }
    void set(std::size_t r, std::size_t c, bool v) { keep[r * cols + c] = v ? 1 : 0; }
};

// a (m x k) times b (k x n). Accumulates over k in ascending order with a
// scalar accumulator per output entry, so results are reproducible.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Row-wise softmax with per-row max subtraction. Masked-out entries are
// exactly 0 and do not contribute to the max or the denominator. A row with
// every entry masked has no well-defined distribution and throws.
Matrix softmax_rows(const Matrix& m);
Matrix softmax_rows(const Matrix& m, const Mask& mask);

// y_i = gain_i * x_i / sqrt(mean(x^2) + eps)
Vector rms_norm(const Vector& x, const Vector& gain, double eps);
void rms_norm_inplace(std::span<const double> x, std::span<const double> gain,
                      double eps, std::span<double> out);

// Index of the maximum entry, ties broken by lowest index.
std::size_t argmax(std::span<const double> v);
std::size_t argmax(const Vector& v);

}  // namespace ctxlab
