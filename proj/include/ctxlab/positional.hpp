#pragma once

// Positional encoding strategies: classic sinusoidal input encodings, rotary
// embeddings (RoPE) applied to query/key vectors, and the rectified variant
// (ReRoPE / LeakyReRoPE) that clamps or leaks relative distances beyond a
// window so rotations never leave the trained range.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "ctxlab/linalg.hpp"

namespace ctxlab {

// Frequency schedule theta_j = base^(-2j / head_dim), j = 0 .. head_dim/2 - 1.
// Consecutive entries (2j, 2j+1) of a head vector form the rotated pair.
struct RopeConfig {
    std::size_t head_dim = 0;  // must be even
    double base = 10000.0;     // must be > 1

    double freq(std::size_t j) const;
    void validate() const;  // throws ConfigError / ShapeError
};

struct ReRopeConfig {
    RopeConfig rope;
    std::size_t window = 512;  // w, must be >= 1
    // Leak factor k >= 1; +infinity means pure ReRoPE (distance clamped to w).
    double leak_factor = std::numeric_limits<double>::infinity();

    bool is_clamp() const { return std::isinf(leak_factor); }
    // Effective relative distance for a pair |i - j| = dist >= window.
    double effective_distance(double dist) const;
    void validate() const;
};

// entry 2j = sin(pos / 10000^(2j/dim)), entry 2j+1 = cos(same). dim even.
Vector sinusoidal_encoding(std::size_t pos, std::size_t dim);

// Rotate each consecutive pair (x_{2j}, x_{2j+1}) by angle pos * theta_j.
// pos is a double so callers can rotate by fractional effective distances.
Vector apply_rope(const Vector& x, double pos, const RopeConfig& cfg);

// Same rotation with one explicit angle per pair; apply_rope is this with
// angles[j] = pos * theta_j. angles.size() must equal x.len() / 2.
Vector apply_pair_rotation(const Vector& x, std::span<const double> angles);

// Score matrix with entry (i, j) = <apply_rope(q_i, q_pos[i]), apply_rope(k_j, k_pos[j])>.
// Unscaled: the attention layer applies 1/sqrt(d).
Matrix rope_scores(const Matrix& q_rows, const Matrix& k_rows,
                   std::span<const double> q_positions,
                   std::span<const double> k_positions, const RopeConfig& cfg);

// Convenience: q/k rows at integer positions 0..n-1 on both sides.
Matrix rope_scores(const Matrix& q_rows, const Matrix& k_rows, const RopeConfig& cfg);

// Rectified scores over a causal sequence. Entries with |i - j| < w keep the
// plain RoPE value; entries at or beyond the window are recomputed at the
// effective distance w + (|i - j| - w)/k (exactly w when k is infinite).
// Computed as two full score matrices merged by the window mask.
Matrix rerope_scores(const Matrix& q_rows, const Matrix& k_rows, const ReRopeConfig& cfg);

// General form for query rows living at arbitrary integer positions (used by
// incremental decoding, where a single query row sits at the sequence end).
Matrix rerope_scores_at(const Matrix& q_rows, const Matrix& k_rows,
                        std::span<const std::size_t> q_positions,
                        std::span<const std::size_t> k_positions,
                        const ReRopeConfig& cfg);

}  // namespace ctxlab
