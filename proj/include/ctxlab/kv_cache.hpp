#pragma once

// Key/value storage strategies for autoregressive decoding:
//   - ContiguousCache: append-only baseline, one slot per token seen.
//   - SinkCache: permanently retained initial tokens plus a ring of the most
//     recent ones; everything in between is evicted. Bounded memory.
//   - PagedCache: block-table indirection over a pool of fixed-size physical
//     blocks, with a free list and fragmentation accounting.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ctxlab/linalg.hpp"

namespace ctxlab {

class ContiguousCache {
public:
    explicit ContiguousCache(std::size_t dim) : dim_(dim) {}

    void append(const Vector& k, const Vector& v);

    std::size_t size() const { return count_; }
    std::size_t dim() const { return dim_; }
    // Memory audit: contiguous storage holds exactly one slot per token.
    std::size_t slot_count() const { return count_; }

    std::span<const double> key(std::size_t token) const;
    std::span<const double> value(std::size_t token) const;

    Matrix gather_keys() const { return Matrix(count_, dim_, keys_); }
    Matrix gather_values() const { return Matrix(count_, dim_, values_); }

private:
    std::size_t dim_;
    std::size_t count_ = 0;
    std::vector<double> keys_;
    std::vector<double> values_;
};

// Slot order exposed to attention: sink tokens first (original order), then
// ring tokens oldest to newest. Positions fed to rotary encodings are these
// slot indices, not the original token indices; the original indices remain
// available for auditing.
class SinkCache {
public:
    SinkCache(std::size_t dim, std::size_t n_sink, std::size_t window);

    // Returns the original index of the evicted token, if any.
    std::optional<std::size_t> append(const Vector& k, const Vector& v);

    std::size_t dim() const { return dim_; }
    std::size_t n_sink() const { return n_sink_; }
    std::size_t window() const { return window_; }
    std::size_t capacity() const { return n_sink_ + window_; }
    std::size_t stored() const;       // tokens currently held
    std::size_t seen() const { return seen_; }
    std::size_t slot_count() const { return stored(); }

    std::span<const double> key(std::size_t slot) const;
    std::span<const double> value(std::size_t slot) const;
    std::size_t absolute_position(std::size_t slot) const;

    // Original token indices of everything currently held, in slot order.
    std::vector<std::size_t> retained_indices() const;

    Matrix gather_keys() const;
    Matrix gather_values() const;

private:
    struct Section {
        std::vector<double> keys;
        std::vector<double> values;
        std::vector<std::size_t> origin;
    };

    std::size_t ring_slot(std::size_t logical) const;  // logical 0 = oldest

    std::size_t dim_;
    std::size_t n_sink_;
    std::size_t window_;
    std::size_t seen_ = 0;
    Section sink_;
    Section ring_;                 // fixed capacity window_, circular
    std::size_t ring_start_ = 0;   // physical index of the oldest ring token
    std::size_t ring_count_ = 0;
};

// Physical block storage shared by one or more sequences. Blocks are acquired
// from the free list first; the pool grows on demand up to max_blocks.
class BlockPool {
public:
    BlockPool(std::size_t dim, std::size_t block_size, std::size_t initial_blocks = 0,
              std::size_t max_blocks = SIZE_MAX);

    std::size_t acquire();             // throws OutOfBlocksError when exhausted
    void release(std::size_t block_id);

    std::size_t dim() const { return dim_; }
    std::size_t block_size() const { return block_size_; }
    std::size_t pool_size() const { return total_blocks_; }  // blocks ever created
    std::size_t free_count() const { return free_list_.size(); }

    std::span<double> key_slot(std::size_t block_id, std::size_t slot);
    std::span<double> value_slot(std::size_t block_id, std::size_t slot);
    std::span<const double> key_slot(std::size_t block_id, std::size_t slot) const;
    std::span<const double> value_slot(std::size_t block_id, std::size_t slot) const;

private:
    std::size_t dim_;
    std::size_t block_size_;
    std::size_t max_blocks_;
    std::size_t total_blocks_ = 0;
    std::vector<double> keys_;    // total_blocks * block_size * dim
    std::vector<double> values_;
    std::vector<std::size_t> free_list_;  // LIFO
};

struct FragmentationStats {
    std::size_t blocks_used = 0;
    std::size_t slots_allocated = 0;
    std::size_t slots_filled = 0;
    std::size_t internal_fragmentation = 0;  // allocated - filled
};

// One sequence's view over a BlockPool: an ordered block table plus a filled
// count. Blocks in the table are full except possibly the last.
class PagedCache {
public:
    PagedCache(std::shared_ptr<BlockPool> pool);
    // Convenience: private pool, growth up to max_blocks.
    PagedCache(std::size_t dim, std::size_t block_size, std::size_t max_blocks = SIZE_MAX);

    ~PagedCache();
    PagedCache(PagedCache&&) = default;
    PagedCache& operator=(PagedCache&&) = default;

    // Append one token; acquires a fresh block when the last one is full.
    void append(const Vector& k, const Vector& v);

    // Release every block of this sequence back to the pool and reset.
    void free_sequence();

    std::size_t size() const { return filled_; }
    std::size_t dim() const { return pool_->dim(); }
    std::size_t block_size() const { return pool_->block_size(); }
    const std::vector<std::size_t>& block_table() const { return table_; }
    const BlockPool& pool() const { return *pool_; }

    FragmentationStats stats() const;
    std::size_t slot_count() const { return stats().slots_allocated; }

    // Logical (token-indexed) access through the block table.
    std::span<const double> key(std::size_t token) const;
    std::span<const double> value(std::size_t token) const;

    // Block-level access for the paged attention kernel.
    std::size_t block_count() const { return table_.size(); }
    std::size_t block_fill(std::size_t block_index) const;
    std::span<const double> block_key(std::size_t block_index, std::size_t slot) const;
    std::span<const double> block_value(std::size_t block_index, std::size_t slot) const;

    Matrix gather_keys() const;
    Matrix gather_values() const;

private:
    std::shared_ptr<BlockPool> pool_;
    std::vector<std::size_t> table_;
    std::size_t filled_ = 0;
};

}  // namespace ctxlab
