#include "ctxlab/linalg.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace ctxlab {

namespace {

bool span_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace

Vector::Vector(std::initializer_list<double> init) : data(init) {
    if (!all_finite()) throw InputError("Vector: non-finite entry");
}

Vector::Vector(std::vector<double> values) : data(std::move(values)) {
    if (!all_finite()) throw InputError("Vector: non-finite entry");
}

bool Vector::all_finite() const { return span_finite(span()); }

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
        throw ShapeError("Matrix: data length " + std::to_string(data.size()) +
                         " != " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (!all_finite()) throw InputError("Matrix: non-finite entry");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> init) {
    Matrix m;
    m.rows = init.size();
    m.cols = m.rows == 0 ? 0 : init.begin()->size();
    m.data.reserve(m.rows * m.cols);
    for (const auto& r : init) {
        if (r.size() != m.cols) throw ShapeError("Matrix::from_rows: ragged rows");
        m.data.insert(m.data.end(), r.begin(), r.end());
    }
    if (!m.all_finite()) throw InputError("Matrix: non-finite entry");
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Vector Matrix::row_vector(std::size_t r) const {
    Vector v;
    auto s = row(r);
    v.data.assign(s.begin(), s.end());
    return v;
}

bool Matrix::all_finite() const { return span_finite({data.data(), data.size()}); }

Mask Mask::causal(std::size_t rows, std::size_t cols, std::size_t row_offset) {
    Mask m(rows, cols, false);
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t limit = i + row_offset;  // inclusive column bound
        for (std::size_t j = 0; j < cols && j <= limit; ++j) m.keep[i * cols + j] = 1;
    }
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
    Matrix out(a.rows, b.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) {
                acc += arow[k] * b.data[k * b.cols + j];
            }
            out.data[i * b.cols + j] = acc;
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
    }
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    Mask all(m.rows, m.cols, true);
    return softmax_rows(m, all);
}

Matrix softmax_rows(const Matrix& m, const Mask& mask) {
    if (mask.rows != m.rows || mask.cols != m.cols) {
        throw ShapeError("softmax_rows: mask shape mismatch");
    }
    Matrix out(m.rows, m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (!mask.at(i, j)) continue;
            any = true;
            mx = std::max(mx, m.at(i, j));
        }
        if (!any) {
            throw NumericError("softmax_rows: row " + std::to_string(i) + " fully masked");
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (!mask.at(i, j)) continue;
            double e = std::exp(m.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (mask.at(i, j)) out.at(i, j) /= denom;
        }
    }
    return out;
}

void rms_norm_inplace(std::span<const double> x, std::span<const double> gain,
                      double eps, std::span<double> out) {
    if (x.size() != gain.size() || x.size() != out.size()) {
        throw ShapeError("rms_norm: length mismatch");
    }
    if (!(eps > 0.0) && eps != 0.0) throw InputError("rms_norm: eps must be >= 0");
    double ms = 0.0;
    for (double v : x) ms += v * v;
    ms /= static_cast<double>(x.size());
    double inv = 1.0 / std::sqrt(ms + eps);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * x[i] * inv;
}

Vector rms_norm(const Vector& x, const Vector& gain, double eps) {
    Vector y(x.len());
    rms_norm_inplace(x.span(), gain.span(), eps, {y.data.data(), y.data.size()});
    return y;
}

std::size_t argmax(std::span<const double> v) {
    if (v.empty()) throw InputError("argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;  // strict >, so ties keep the lowest index
    }
    return best;
}

std::size_t argmax(const Vector& v) { return argmax(v.span()); }

}  // namespace ctxlab
