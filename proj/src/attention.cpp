#include "ctxlab/attention.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace ctxlab {

const char* to_string(AttnBackend b) {
    switch (b) {
        case AttnBackend::naive: return "naive";
        case AttnBackend::flash: return "flash";
        case AttnBackend::paged: return "paged";
        case AttnBackend::streaming: return "streaming";
    }
    return "?";
}

const char* to_string(PeMode m) {
    switch (m) {
        case PeMode::none: return "none";
        case PeMode::rope: return "rope";
        case PeMode::rerope: return "rerope";
    }
    return "?";
}

double AttentionSpec::scale() const {
    return 1.0 / std::sqrt(static_cast<double>(head_dim));
}

void AttentionSpec::validate() const {
    if (head_dim < 1) throw ConfigError("AttentionSpec: head_dim must be >= 1");
    if (tile_size < 1) throw ConfigError("AttentionSpec: tile_size must be >= 1");
    if (block_size < 1) throw ConfigError("AttentionSpec: block_size must be >= 1");
    if (pe != PeMode::none) {
        rope.validate();
        if (rope.head_dim != head_dim) {
            throw ConfigError("AttentionSpec: rope.head_dim must equal head_dim");
        }
    }
    if (pe == PeMode::rerope) {
        rerope_config().validate();
        if (backend != AttnBackend::naive) {
            throw ConfigError(std::string("unsupported combination: rerope + ") +
                              to_string(backend) +
                              " (rerope needs materialized pairwise scores)");
        }
    }
}

namespace {

void reject_rerope(const AttentionSpec& spec, const char* kernel) {
    if (spec.pe == PeMode::rerope) {
        throw ConfigError(std::string("unsupported combination: rerope + ") + kernel);
    }
}

void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionSpec& spec) {
    if (q.cols != spec.head_dim || k.cols != spec.head_dim) {
        throw ShapeError("attention: q/k width must equal head_dim");
    }
    if (k.rows != v.rows) throw ShapeError("attention: k and v row counts differ");
    if (q.rows > k.rows) throw ShapeError("attention: more queries than keys");
    if (q.rows == 0) throw ShapeError("attention: no query rows");
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// Rotate a row by pos * theta_j per pair; identity when pe is none.
Vector maybe_rotate(std::span<const double> row, double pos, const AttentionSpec& spec) {
    Vector v;
    v.data.assign(row.begin(), row.end());
    if (spec.pe == PeMode::none) return v;
    return apply_rope(v, pos, spec.rope);
}

}  // namespace

Matrix naive_attention(const Matrix& q_rows, const Matrix& k_rows, const Matrix& v_rows,
                       const AttentionSpec& spec) {
    spec.validate();
    check_qkv(q_rows, k_rows, v_rows, spec);
    std::size_t offset = k_rows.rows - q_rows.rows;

    Matrix scores;
    switch (spec.pe) {
        case PeMode::none:
            scores = matmul(q_rows, transpose(k_rows));
            break;
        case PeMode::rope: {
            std::vector<double> q_pos(q_rows.rows), k_pos(k_rows.rows);
            for (std::size_t i = 0; i < q_pos.size(); ++i) q_pos[i] = static_cast<double>(offset + i);
            for (std::size_t j = 0; j < k_pos.size(); ++j) k_pos[j] = static_cast<double>(j);
            scores = rope_scores(q_rows, k_rows, q_pos, k_pos, spec.rope);
            break;
        }
        case PeMode::rerope: {
            std::vector<std::size_t> q_pos(q_rows.rows), k_pos(k_rows.rows);
            for (std::size_t i = 0; i < q_pos.size(); ++i) q_pos[i] = offset + i;
            for (std::size_t j = 0; j < k_pos.size(); ++j) k_pos[j] = j;
            scores = rerope_scores_at(q_rows, k_rows, q_pos, k_pos, spec.rerope_config());
            break;
        }
    }

    double sc = spec.scale();
    for (double& x : scores.data) x *= sc;

    Mask mask = Mask::causal(q_rows.rows, k_rows.rows, offset);
    Matrix probs = softmax_rows(scores, mask);
    return matmul(probs, v_rows);
}

Matrix flash_attention(const Matrix& q_rows, const Matrix& k_rows, const Matrix& v_rows,
                       const AttentionSpec& spec) {
    reject_rerope(spec, "flash");
    spec.validate();
    check_qkv(q_rows, k_rows, v_rows, spec);
    std::size_t offset = k_rows.rows - q_rows.rows;
    double sc = spec.scale();

    // Rotated keys are O(n*d); the n x n score matrix is never formed.
    Matrix k_eff = k_rows;
    if (spec.pe == PeMode::rope) {
        for (std::size_t j = 0; j < k_rows.rows; ++j) {
            Vector r = maybe_rotate(k_rows.row(j), static_cast<double>(j), spec);
            std::copy(r.data.begin(), r.data.end(), k_eff.row(j).begin());
        }
    }

    Matrix out(q_rows.rows, v_rows.cols, 0.0);
    std::vector<double> tile_scores(spec.tile_size);
    std::vector<double> acc(v_rows.cols);

    for (std::size_t i = 0; i < q_rows.rows; ++i) {
        std::size_t abs_i = offset + i;
        std::size_t n_keys = std::min(k_rows.rows, abs_i + 1);  // causal span
        Vector q_rot = maybe_rotate(q_rows.row(i), static_cast<double>(abs_i), spec);

        double run_max = -std::numeric_limits<double>::infinity();
        double denom = 0.0;
        std::fill(acc.begin(), acc.end(), 0.0);

        for (std::size_t tile0 = 0; tile0 < n_keys; tile0 += spec.tile_size) {
            std::size_t tile1 = std::min(tile0 + spec.tile_size, n_keys);

            double tile_max = -std::numeric_limits<double>::infinity();
            for (std::size_t j = tile0; j < tile1; ++j) {
                double s = dot({q_rot.data.data(), q_rot.data.size()}, k_eff.row(j)) * sc;
                tile_scores[j - tile0] = s;
                tile_max = std::max(tile_max, s);
            }

            double new_max = std::max(run_max, tile_max);
            if (denom > 0.0 && new_max > run_max) {
                double rescale = std::exp(run_max - new_max);
                denom *= rescale;
                for (double& a : acc) a *= rescale;
            }
            run_max = new_max;

            for (std::size_t j = tile0; j < tile1; ++j) {
                double p = std::exp(tile_scores[j - tile0] - run_max);
                denom += p;
                auto vr = v_rows.row(j);
                for (std::size_t c = 0; c < vr.size(); ++c) acc[c] += p * vr[c];
            }
        }

        for (std::size_t c = 0; c < acc.size(); ++c) out.at(i, c) = acc[c] / denom;
    }
    return out;
}

Vector paged_attention(const Vector& q, const PagedCache& cache, const AttentionSpec& spec,
                       std::size_t position) {
    reject_rerope(spec, "paged");
    spec.validate();
    if (cache.size() == 0) throw EmptyContextError("paged_attention: empty cache");
    if (q.len() != spec.head_dim || cache.dim() != spec.head_dim) {
        throw ShapeError("paged_attention: q/cache width must equal head_dim");
    }

    std::size_t B = cache.block_size();
    std::size_t attended = std::min(cache.size(), position + 1);
    double sc = spec.scale();
    Vector q_rot = maybe_rotate(q.span(), static_cast<double>(position), spec);

    auto score_at = [&](std::size_t token) {
        Vector k_rot = maybe_rotate(cache.key(token), static_cast<double>(token), spec);
        return dot(q_rot.span(), k_rot.span()) * sc;
    };

    // Pass 1 over blocks: running max and rescaled denominator.
    double run_max = -std::numeric_limits<double>::infinity();
    double denom = 0.0;
    for (std::size_t b = 0; b * B < attended; ++b) {
        std::size_t fill = std::min(cache.block_fill(b), attended - b * B);
        for (std::size_t s = 0; s < fill; ++s) {
            double sv = score_at(b * B + s);
            if (sv > run_max) {
                if (denom > 0.0) denom *= std::exp(run_max - sv);
                run_max = sv;
            }
            denom += std::exp(sv - run_max);
        }
    }

    // Pass 2: weight the value blocks.
    Vector out(cache.dim());
    for (std::size_t b = 0; b * B < attended; ++b) {
        std::size_t fill = std::min(cache.block_fill(b), attended - b * B);
        for (std::size_t s = 0; s < fill; ++s) {
            std::size_t token = b * B + s;
            double w = std::exp(score_at(token) - run_max) / denom;
            auto vr = cache.value(token);
            for (std::size_t c = 0; c < vr.size(); ++c) out[c] += w * vr[c];
        }
    }
    return out;
}

Vector streaming_attention(const Vector& q, const SinkCache& cache, const AttentionSpec& spec) {
    reject_rerope(spec, "streaming");
    spec.validate();
    std::size_t m = cache.stored();
    if (m == 0) throw EmptyContextError("streaming_attention: empty cache");
    if (q.len() != spec.head_dim || cache.dim() != spec.head_dim) {
        throw ShapeError("streaming_attention: q/cache width must equal head_dim");
    }

    // The query token is the newest cache slot, except in the degenerate
    // window-0 configuration where it was not retained at all.
    std::size_t q_slot = m - 1;
    if (cache.window() == 0 && cache.seen() > cache.n_sink()) q_slot = m;

    double sc = spec.scale();
    Vector q_rot = maybe_rotate(q.span(), static_cast<double>(q_slot), spec);

    std::vector<double> scores(m);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < m; ++s) {
        Vector k_rot = maybe_rotate(cache.key(s), static_cast<double>(s), spec);
        scores[s] = dot(q_rot.span(), k_rot.span()) * sc;
        mx = std::max(mx, scores[s]);
    }
    double denom = 0.0;
    for (double& s : scores) {
        s = std::exp(s - mx);
        denom += s;
    }

    Vector out(cache.dim());
    for (std::size_t s = 0; s < m; ++s) {
        double w = scores[s] / denom;
        auto vr = cache.value(s);
        for (std::size_t c = 0; c < vr.size(); ++c) out[c] += w * vr[c];
    }
    return out;
}

}  // namespace ctxlab
