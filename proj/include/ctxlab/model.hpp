#pragma once

// Tiny decoder-only transformer in the LLaMA family shape: RMS-norm, rotary
// (or sinusoidal / rectified-rotary) positional handling, multi-head causal
// attention over a pluggable backend, gated SiLU MLP, tied nothing. Weights
// live in a named-tensor container with a JSON header + raw f64 payload.

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ctxlab/attention.hpp"
#include "ctxlab/kv_cache.hpp"
#include "ctxlab/linalg.hpp"

namespace ctxlab {

using TokenId = std::uint32_t;

enum class PeStrategy { sinusoidal, rope, rerope };
const char* to_string(PeStrategy s);

struct ModelConfig {
    std::size_t vocab_size = 256;
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t mlp_hidden = 128;
    // Pretraining-length analogue; metadata the harness uses to label a run
    // as within-length or extrapolation regime.
    std::size_t max_pretrain_len = 256;
    double rope_base = 10000.0;

    std::size_t head_dim() const { return d_model / n_heads; }
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

struct TensorShape {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

class WeightStore {
public:
    void put(const std::string& name, Matrix m);
    const Matrix& get(const std::string& name) const;  // throws InputError
    Matrix& get_mutable(const std::string& name);
    bool contains(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }

    // Complete tensor layout implied by a config, in canonical order.
    static std::vector<TensorShape> layout(const ModelConfig& cfg);
    // Name set complete, shapes consistent, all entries finite.
    void validate_against(const ModelConfig& cfg) const;

    bool operator==(const WeightStore& other) const;

private:
    std::vector<std::string> order_;
    std::vector<Matrix> tensors_;  // parallel to order_
};

// Seeded uniform init, every entry in (-1/sqrt(d_model), 1/sqrt(d_model)).
// Identical (cfg, seed) pairs produce identical stores on any platform.
WeightStore init_random(const ModelConfig& cfg, std::uint64_t seed);

// How the model is driven: positional strategy plus attention backend and
// their knobs. `window` is the ReRoPE window when pe == rerope and the
// rolling-cache capacity when backend == streaming.
struct DecoderSpec {
    PeStrategy pe = PeStrategy::rope;
    AttnBackend backend = AttnBackend::naive;
    std::size_t window = 512;
    double leak_factor = std::numeric_limits<double>::infinity();
    std::size_t n_sink = 4;
    std::size_t block_size = 16;
    std::size_t tile_size = 16;

    AttentionSpec attention_spec(const ModelConfig& cfg) const;
    void validate(const ModelConfig& cfg) const;
};

// Stateful incremental decoder: per-(layer, head) KV caches of the flavor the
// backend needs. prefill() batches whole sequences for the stateless
// backends and walks token-by-token for the cache-bound ones; step() extends
// by one token without recomputing the prefix.
class Decoder {
public:
    Decoder(const WeightStore& weights, const ModelConfig& cfg, const DecoderSpec& spec);

    Matrix prefill(std::span<const TokenId> tokens);  // logits, one row per token
    Vector step(TokenId token);                       // logits for this token

    std::size_t tokens_processed() const { return position_; }
    // Largest per-cache slot footprint observed so far (tokens stored for
    // contiguous/sink caches, slots allocated for paged ones).
    std::size_t peak_cache_slots() const { return peak_slots_; }

private:
    using HeadCache = std::variant<ContiguousCache, SinkCache, PagedCache>;

    Matrix embed(std::span<const TokenId> tokens, std::size_t start_pos) const;
    Matrix attention_block(std::size_t layer, const Matrix& normed, std::size_t start_pos);
    Matrix run_layers(Matrix x, std::size_t start_pos);
    HeadCache& cache_at(std::size_t layer, std::size_t head);
    void note_cache_usage();

    const WeightStore& weights_;
    ModelConfig cfg_;
    DecoderSpec spec_;
    AttentionSpec attn_;
    std::vector<HeadCache> caches_;  // n_layers * n_heads
    std::size_t position_ = 0;
    std::size_t peak_slots_ = 0;
};

// Stateless full forward: fresh caches, all logits. Token ids must be below
// cfg.vocab_size.
Matrix forward(std::span<const TokenId> tokens, const WeightStore& weights,
               const ModelConfig& cfg, const DecoderSpec& spec);

inline constexpr TokenId kNoStopId = static_cast<TokenId>(-1);

// Greedy autoregressive generation: appends argmax tokens until n_new tokens
// are out or stop_id was just emitted (the stop token is included).
std::vector<TokenId> greedy_decode(std::span<const TokenId> context, std::size_t n_new,
                                   TokenId stop_id, const WeightStore& weights,
                                   const ModelConfig& cfg, const DecoderSpec& spec);

struct DecodeResult {
    std::vector<TokenId> tokens;
    std::size_t peak_cache_slots = 0;
};

// greedy_decode plus the cache telemetry the harness reports.
DecodeResult greedy_decode_traced(std::span<const TokenId> context, std::size_t n_new,
                                  TokenId stop_id, const WeightStore& weights,
                                  const ModelConfig& cfg, const DecoderSpec& spec);

// Weight container: [u64 LE header length][JSON header][raw f64 LE payload].
// The header records format/version, the full ModelConfig, and one
// {name, rows, cols, offset} record per tensor; offsets are byte offsets
// into the payload, contiguous in canonical layout order.
void save_weights(const WeightStore& store, const ModelConfig& cfg, const std::string& path);

struct LoadedModel {
    ModelConfig config;
    WeightStore weights;
};

LoadedModel load_weights(const std::string& path);

}  // namespace ctxlab
