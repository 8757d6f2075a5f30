#include "ctxlab/kv_cache.hpp"

#include <algorithm>
#include <string>

namespace ctxlab {

namespace {

void check_kv_dims(const Vector& k, const Vector& v, std::size_t dim) {
    if (k.len() != dim || v.len() != dim) {
        throw ShapeError("cache append: k/v length " + std::to_string(k.len()) + "/" +
                         std::to_string(v.len()) + " != dim " + std::to_string(dim));
    }
}

}  // namespace

// ---------------------------------------------------------------- contiguous

void ContiguousCache::append(const Vector& k, const Vector& v) {
    check_kv_dims(k, v, dim_);
    keys_.insert(keys_.end(), k.data.begin(), k.data.end());
    values_.insert(values_.end(), v.data.begin(), v.data.end());
    ++count_;
}

std::span<const double> ContiguousCache::key(std::size_t token) const {
    return {keys_.data() + token * dim_, dim_};
}

std::span<const double> ContiguousCache::value(std::size_t token) const {
    return {values_.data() + token * dim_, dim_};
}

// ---------------------------------------------------------------------- sink

SinkCache::SinkCache(std::size_t dim, std::size_t n_sink, std::size_t window)
    : dim_(dim), n_sink_(n_sink), window_(window) {
    if (n_sink + window == 0) {
        throw ConfigError("SinkCache: n_sink + window must be >= 1");
    }
    sink_.keys.reserve(n_sink * dim);
    sink_.values.reserve(n_sink * dim);
    ring_.keys.resize(window * dim);
    ring_.values.resize(window * dim);
    ring_.origin.resize(window);
}

std::size_t SinkCache::stored() const { return sink_.origin.size() + ring_count_; }

std::size_t SinkCache::ring_slot(std::size_t logical) const {
    return (ring_start_ + logical) % window_;
}

std::optional<std::size_t> SinkCache::append(const Vector& k, const Vector& v) {
    check_kv_dims(k, v, dim_);
    std::size_t index = seen_++;

    if (sink_.origin.size() < n_sink_) {
        sink_.keys.insert(sink_.keys.end(), k.data.begin(), k.data.end());
        sink_.values.insert(sink_.values.end(), v.data.begin(), v.data.end());
        sink_.origin.push_back(index);
        return std::nullopt;
    }

    if (window_ == 0) return index;  // no roll section: the token is dropped

    std::optional<std::size_t> evicted;
    std::size_t target;
    if (ring_count_ < window_) {
        target = ring_slot(ring_count_);
        ++ring_count_;
    } else {
        target = ring_start_;  // overwrite the oldest
        evicted = ring_.origin[ring_start_];
        ring_start_ = (ring_start_ + 1) % window_;
    }
    std::copy(k.data.begin(), k.data.end(), ring_.keys.begin() + target * dim_);
    std::copy(v.data.begin(), v.data.end(), ring_.values.begin() + target * dim_);
    ring_.origin[target] = index;
    return evicted;
}

std::span<const double> SinkCache::key(std::size_t slot) const {
    std::size_t n = sink_.origin.size();
    if (slot < n) return {sink_.keys.data() + slot * dim_, dim_};
    std::size_t phys = ring_slot(slot - n);
    return {ring_.keys.data() + phys * dim_, dim_};
}

std::span<const double> SinkCache::value(std::size_t slot) const {
    std::size_t n = sink_.origin.size();
    if (slot < n) return {sink_.values.data() + slot * dim_, dim_};
    std::size_t phys = ring_slot(slot - n);
    return {ring_.values.data() + phys * dim_, dim_};
}

std::size_t SinkCache::absolute_position(std::size_t slot) const {
    std::size_t n = sink_.origin.size();
    if (slot < n) return sink_.origin[slot];
    return ring_.origin[ring_slot(slot - n)];
}

std::vector<std::size_t> SinkCache::retained_indices() const {
    std::vector<std::size_t> out;
    out.reserve(stored());
    for (std::size_t s = 0; s < stored(); ++s) out.push_back(absolute_position(s));
    return out;
}

Matrix SinkCache::gather_keys() const {
    Matrix m(stored(), dim_, 0.0);
    for (std::size_t s = 0; s < stored(); ++s) {
        auto k = key(s);
        std::copy(k.begin(), k.end(), m.row(s).begin());
    }
    return m;
}

Matrix SinkCache::gather_values() const {
    Matrix m(stored(), dim_, 0.0);
    for (std::size_t s = 0; s < stored(); ++s) {
        auto v = value(s);
        std::copy(v.begin(), v.end(), m.row(s).begin());
    }
    return m;
}

// --------------------------------------------------------------------- paged

BlockPool::BlockPool(std::size_t dim, std::size_t block_size, std::size_t initial_blocks,
                     std::size_t max_blocks)
    : dim_(dim), block_size_(block_size), max_blocks_(max_blocks) {
    if (block_size < 1) throw ConfigError("BlockPool: block_size must be >= 1");
    if (initial_blocks > max_blocks) {
        throw ConfigError("BlockPool: initial_blocks exceeds max_blocks");
    }
    keys_.resize(initial_blocks * block_size_ * dim_);
    values_.resize(initial_blocks * block_size_ * dim_);
    total_blocks_ = initial_blocks;
    // Free list kept so the lowest ids are handed out first on a fresh pool.
    for (std::size_t b = initial_blocks; b > 0; --b) free_list_.push_back(b - 1);
}

std::size_t BlockPool::acquire() {
    if (!free_list_.empty()) {
        std::size_t id = free_list_.back();
        free_list_.pop_back();
        return id;
    }
    if (total_blocks_ >= max_blocks_) {
        throw OutOfBlocksError("BlockPool: exhausted at " + std::to_string(total_blocks_) +
                               " blocks (cap " + std::to_string(max_blocks_) + ")");
    }
    std::size_t id = total_blocks_++;
    keys_.resize(total_blocks_ * block_size_ * dim_);
    values_.resize(total_blocks_ * block_size_ * dim_);
    return id;
}

void BlockPool::release(std::size_t block_id) {
    if (block_id >= total_blocks_) {
        throw InputError("BlockPool: release of unknown block " + std::to_string(block_id));
    }
    free_list_.push_back(block_id);
}

std::span<double> BlockPool::key_slot(std::size_t block_id, std::size_t slot) {
    return {keys_.data() + (block_id * block_size_ + slot) * dim_, dim_};
}

std::span<double> BlockPool::value_slot(std::size_t block_id, std::size_t slot) {
    return {values_.data() + (block_id * block_size_ + slot) * dim_, dim_};
}

std::span<const double> BlockPool::key_slot(std::size_t block_id, std::size_t slot) const {
    return {keys_.data() + (block_id * block_size_ + slot) * dim_, dim_};
}

std::span<const double> BlockPool::value_slot(std::size_t block_id, std::size_t slot) const {
    return {values_.data() + (block_id * block_size_ + slot) * dim_, dim_};
}

PagedCache::PagedCache(std::shared_ptr<BlockPool> pool) : pool_(std::move(pool)) {
    if (!pool_) throw ConfigError("PagedCache: null pool");
}

PagedCache::PagedCache(std::size_t dim, std::size_t block_size, std::size_t max_blocks)
    : PagedCache(std::make_shared<BlockPool>(dim, block_size, 0, max_blocks)) {}

PagedCache::~PagedCache() {
    if (pool_) free_sequence();
}

void PagedCache::append(const Vector& k, const Vector& v) {
    check_kv_dims(k, v, pool_->dim());
    std::size_t B = pool_->block_size();
    if (filled_ == table_.size() * B) {
        table_.push_back(pool_->acquire());
    }
    std::size_t slot = filled_ % B;
    std::size_t block = table_.back();
    auto kd = pool_->key_slot(block, slot);
    auto vd = pool_->value_slot(block, slot);
    std::copy(k.data.begin(), k.data.end(), kd.begin());
    std::copy(v.data.begin(), v.data.end(), vd.begin());
    ++filled_;
}

void PagedCache::free_sequence() {
    // Released in reverse so a LIFO reacquire sees the lowest id first.
    for (auto it = table_.rbegin(); it != table_.rend(); ++it) pool_->release(*it);
    table_.clear();
    filled_ = 0;
}

FragmentationStats PagedCache::stats() const {
    FragmentationStats s;
    s.blocks_used = table_.size();
    s.slots_allocated = table_.size() * pool_->block_size();
    s.slots_filled = filled_;
    s.internal_fragmentation = s.slots_allocated - s.slots_filled;
    return s;
}

std::span<const double> PagedCache::key(std::size_t token) const {
    std::size_t B = pool_->block_size();
    return pool_->key_slot(table_[token / B], token % B);
}

std::span<const double> PagedCache::value(std::size_t token) const {
    std::size_t B = pool_->block_size();
    return pool_->value_slot(table_[token / B], token % B);
}

std::size_t PagedCache::block_fill(std::size_t block_index) const {
    std::size_t B = pool_->block_size();
    std::size_t full_before = block_index * B;
    return std::min(B, filled_ - full_before);
}

std::span<const double> PagedCache::block_key(std::size_t block_index, std::size_t slot) const {
    return pool_->key_slot(table_[block_index], slot);
}

std::span<const double> PagedCache::block_value(std::size_t block_index, std::size_t slot) const {
    return pool_->value_slot(table_[block_index], slot);
}

Matrix PagedCache::gather_keys() const {
    Matrix m(filled_, pool_->dim(), 0.0);
    for (std::size_t t = 0; t < filled_; ++t) {
        auto k = key(t);
        std::copy(k.begin(), k.end(), m.row(t).begin());
    }
    return m;
}

Matrix PagedCache::gather_values() const {
    Matrix m(filled_, pool_->dim(), 0.0);
    for (std::size_t t = 0; t < filled_; ++t) {
        auto v = value(t);
        std::copy(v.begin(), v.end(), m.row(t).begin());
    }
    return m;
}

}  // namespace ctxlab
