#pragma once

// Four interchangeable causal attention backends over one contract:
//   naive     - materializes the scaled score matrix, masks, softmaxes.
//   flash     - key-tiled online softmax; never holds the full score matrix.
//   paged     - single-query kernel over a PagedCache block table, two passes
//               over blocks with O(1) extra state.
//   streaming - single-query kernel over a SinkCache (sink + rolling ring),
//               with slot-order positional re-indexing.
// All backends scale scores by 1/sqrt(head_dim) and agree within tight
// tolerances; that equivalence is the core of the test suite.

#include <cstddef>

#include "ctxlab/kv_cache.hpp"
#include "ctxlab/linalg.hpp"
#include "ctxlab/positional.hpp"

namespace ctxlab {

enum class AttnBackend { naive, flash, paged, streaming };
enum class PeMode { none, rope, rerope };

const char* to_string(AttnBackend b);
const char* to_string(PeMode m);

struct AttentionSpec {
    AttnBackend backend = AttnBackend::naive;
    std::size_t head_dim = 0;
    std::size_t tile_size = 16;   // flash
    std::size_t block_size = 16;  // paged; must match the cache it reads
    PeMode pe = PeMode::none;
    RopeConfig rope;                // used when pe != none
    std::size_t rerope_window = 512;
    double rerope_leak = std::numeric_limits<double>::infinity();

    double scale() const;
    ReRopeConfig rerope_config() const { return {rope, rerope_window, rerope_leak}; }
    void validate() const;  // throws ConfigError on bad sizes or pe/backend combos
};

// Queries may be a suffix of the key sequence: query row i sits at absolute
// position (k_rows.rows - q_rows.rows + i) and attends keys at or before it.
Matrix naive_attention(const Matrix& q_rows, const Matrix& k_rows, const Matrix& v_rows,
                       const AttentionSpec& spec);

// Same contract as naive_attention, computed tile-by-tile over keys with a
// running max / denominator / rescaled accumulator per query row.
Matrix flash_attention(const Matrix& q_rows, const Matrix& k_rows, const Matrix& v_rows,
                       const AttentionSpec& spec);

// Single query at absolute `position` over a paged cache. Cached tokens with
// logical index > position are masked out (only the final partial block can
// contain any).
Vector paged_attention(const Vector& q, const PagedCache& cache, const AttentionSpec& spec,
                       std::size_t position);

// Single query for the most recently appended token over a sink cache.
// Rotary positions are cache-slot indices (0..stored-1).
Vector streaming_attention(const Vector& q, const SinkCache& cache, const AttentionSpec& spec);

}  // namespace ctxlab
