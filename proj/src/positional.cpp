#include "ctxlab/positional.hpp"

#include <cmath>
#include <string>

namespace ctxlab {

double RopeConfig::freq(std::size_t j) const {
    return std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(head_dim));
}

void RopeConfig::validate() const {
    if (head_dim % 2 != 0) {
        throw ConfigError("RopeConfig: head_dim must be even, got " + std::to_string(head_dim));
    }
    if (!(base > 1.0)) {
        throw ConfigError("RopeConfig: base must be > 1");
    }
}

double ReRopeConfig::effective_distance(double dist) const {
    if (is_clamp()) return static_cast<double>(window);
    return static_cast<double>(window) + (dist - static_cast<double>(window)) / leak_factor;
}

void ReRopeConfig::validate() const {
    rope.validate();
    if (window < 1) throw ConfigError("ReRopeConfig: window must be >= 1");
    if (!std::isinf(leak_factor) && !(leak_factor >= 1.0)) {
        throw ConfigError("ReRopeConfig: leak_factor must be >= 1 or infinite");
    }
}

Vector sinusoidal_encoding(std::size_t pos, std::size_t dim) {
    if (dim % 2 != 0) {
        throw ShapeError("sinusoidal_encoding: dim must be even, got " + std::to_string(dim));
    }
    Vector out(dim);
    for (std::size_t j = 0; 2 * j < dim; ++j) {
        double angle = static_cast<double>(pos) /
                       std::pow(10000.0, 2.0 * static_cast<double>(j) / static_cast<double>(dim));
        out[2 * j] = std::sin(angle);
        out[2 * j + 1] = std::cos(angle);
    }
    return out;
}

Vector apply_pair_rotation(const Vector& x, std::span<const double> angles) {
    if (x.len() % 2 != 0 || angles.size() != x.len() / 2) {
        throw ShapeError("apply_pair_rotation: need one angle per consecutive pair");
    }
    Vector out(x.len());
    for (std::size_t j = 0; j < angles.size(); ++j) {
        double c = std::cos(angles[j]);
        double s = std::sin(angles[j]);
        double a = x[2 * j];
        double b = x[2 * j + 1];
        out[2 * j] = a * c - b * s;
        out[2 * j + 1] = a * s + b * c;
    }
    return out;
}

Vector apply_rope(const Vector& x, double pos, const RopeConfig& cfg) {
    cfg.validate();
    if (x.len() != cfg.head_dim) {
        throw ShapeError("apply_rope: vector length " + std::to_string(x.len()) +
                         " != head_dim " + std::to_string(cfg.head_dim));
    }
    std::vector<double> angles(cfg.head_dim / 2);
    for (std::size_t j = 0; j < angles.size(); ++j) angles[j] = pos * cfg.freq(j);
    return apply_pair_rotation(x, angles);
}

namespace {

void check_score_shapes(const Matrix& q_rows, const Matrix& k_rows,
                        std::size_t n_q_pos, std::size_t n_k_pos, const RopeConfig& cfg) {
    cfg.validate();
    if (q_rows.cols != cfg.head_dim || k_rows.cols != cfg.head_dim) {
        throw ShapeError("rope_scores: row width must equal head_dim");
    }
    if (n_q_pos != q_rows.rows || n_k_pos != k_rows.rows) {
        throw ShapeError("rope_scores: one position per row required");
    }
}

Matrix rotate_rows(const Matrix& rows, std::span<const double> positions, const RopeConfig& cfg) {
    Matrix out(rows.rows, rows.cols, 0.0);
    std::vector<double> angles(cfg.head_dim / 2);
    for (std::size_t i = 0; i < rows.rows; ++i) {
        for (std::size_t j = 0; j < angles.size(); ++j) angles[j] = positions[i] * cfg.freq(j);
        Vector r = apply_pair_rotation(rows.row_vector(i), angles);
        std::copy(r.data.begin(), r.data.end(), out.row(i).begin());
    }
    return out;
}

std::vector<double> iota_positions(std::size_t n) {
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<double>(i);
    return p;
}

}  // namespace

Matrix rope_scores(const Matrix& q_rows, const Matrix& k_rows,
                   std::span<const double> q_positions,
                   std::span<const double> k_positions, const RopeConfig& cfg) {
    check_score_shapes(q_rows, k_rows, q_positions.size(), k_positions.size(), cfg);
    Matrix q_rot = rotate_rows(q_rows, q_positions, cfg);
    Matrix k_rot = rotate_rows(k_rows, k_positions, cfg);
    return matmul(q_rot, transpose(k_rot));
}

Matrix rope_scores(const Matrix& q_rows, const Matrix& k_rows, const RopeConfig& cfg) {
    std::vector<double> q_pos = iota_positions(q_rows.rows);
    std::vector<double> k_pos = iota_positions(k_rows.rows);
    return rope_scores(q_rows, k_rows, q_pos, k_pos, cfg);
}

Matrix rerope_scores_at(const Matrix& q_rows, const Matrix& k_rows,
                        std::span<const std::size_t> q_positions,
                        std::span<const std::size_t> k_positions,
                        const ReRopeConfig& cfg) {
    cfg.validate();
    std::vector<double> q_pos(q_positions.begin(), q_positions.end());
    std::vector<double> k_pos(k_positions.begin(), k_positions.end());

    // Pass 1: plain rotary scores at the true positions.
    Matrix inner = rope_scores(q_rows, k_rows, q_pos, k_pos, cfg.rope);

    // Pass 2: every entry recomputed at its effective distance. Only relative
    // angle enters the inner product, so rotating the query by the effective
    // distance and leaving the key unrotated realizes the rectified score.
    Matrix outer(q_rows.rows, k_rows.rows, 0.0);
    for (std::size_t i = 0; i < q_rows.rows; ++i) {
        Vector qi = q_rows.row_vector(i);
        for (std::size_t j = 0; j < k_rows.rows; ++j) {
            double dist = std::abs(q_pos[i] - k_pos[j]);
            Vector q_rot = apply_rope(qi, cfg.effective_distance(dist), cfg.rope);
            double acc = 0.0;
            auto kj = k_rows.row(j);
            for (std::size_t t = 0; t < kj.size(); ++t) acc += q_rot[t] * kj[t];
            outer.at(i, j) = acc;
        }
    }

    // Merge: strict |i - j| < w keeps the rotary score.
    Matrix merged(q_rows.rows, k_rows.rows, 0.0);
    for (std::size_t i = 0; i < q_rows.rows; ++i) {
        for (std::size_t j = 0; j < k_rows.rows; ++j) {
            double dist = std::abs(q_pos[i] - k_pos[j]);
            merged.at(i, j) =
                dist < static_cast<double>(cfg.window) ? inner.at(i, j) : outer.at(i, j);
        }
    }
    return merged;
}

Matrix rerope_scores(const Matrix& q_rows, const Matrix& k_rows, const ReRopeConfig& cfg) {
    if (q_rows.rows != k_rows.rows) {
        throw ShapeError("rerope_scores: causal form expects equal query/key counts");
    }
    std::vector<std::size_t> pos(q_rows.rows);
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
    return rerope_scores_at(q_rows, k_rows, pos, pos, cfg);
}

}  // namespace ctxlab
