#include "ctxlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "ctxlab/errors.hpp"
#include "ctxlab/positional.hpp"

namespace ctxlab {

namespace {

constexpr double kRmsEps = 1e-5;
constexpr const char* kWeightFormat = "ctxlab.weights";
constexpr int kWeightVersion = 1;

double silu(double x) { return x / (1.0 + std::exp(-x)); }

// mt19937_64 output mapped to [0, 1) through the top 53 bits, so the stream
// does not depend on the standard library's distribution implementation.
double unit_double(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

const char* to_string(PeStrategy s) {
    switch (s) {
        case PeStrategy::sinusoidal: return "sinusoidal";
        case PeStrategy::rope: return "rope";
        case PeStrategy::rerope: return "rerope";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (vocab_size < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || mlp_hidden < 1 ||
        max_pretrain_len < 1) {
        throw ConfigError("ModelConfig: all counts must be >= 1");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("ModelConfig: d_model must be divisible by n_heads");
    }
    if (!(rope_base > 1.0)) throw ConfigError("ModelConfig: rope_base must be > 1");
}

// ----------------------------------------------------------------- weights

void WeightStore::put(const std::string& name, Matrix m) {
    for (std::size_t i = 0; i < order_.size(); ++i) {
        if (order_[i] == name) {
            tensors_[i] = std::move(m);
            return;
        }
    }
    order_.push_back(name);
    tensors_.push_back(std::move(m));
}

const Matrix& WeightStore::get(const std::string& name) const {
    for (std::size_t i = 0; i < order_.size(); ++i) {
        if (order_[i] == name) return tensors_[i];
    }
    throw InputError("WeightStore: missing tensor '" + name + "'");
}

Matrix& WeightStore::get_mutable(const std::string& name) {
    return const_cast<Matrix&>(static_cast<const WeightStore*>(this)->get(name));
}

bool WeightStore::contains(const std::string& name) const {
    return std::find(order_.begin(), order_.end(), name) != order_.end();
}

std::vector<TensorShape> WeightStore::layout(const ModelConfig& cfg) {
    std::vector<TensorShape> shapes;
    shapes.push_back({"tok_embed", cfg.vocab_size, cfg.d_model});
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        std::string p = "layers." + std::to_string(l) + ".";
        shapes.push_back({p + "attn_norm", 1, cfg.d_model});
        shapes.push_back({p + "wq", cfg.d_model, cfg.d_model});
        shapes.push_back({p + "wk", cfg.d_model, cfg.d_model});
        shapes.push_back({p + "wv", cfg.d_model, cfg.d_model});
        shapes.push_back({p + "wo", cfg.d_model, cfg.d_model});
        shapes.push_back({p + "mlp_norm", 1, cfg.d_model});
        shapes.push_back({p + "w_gate", cfg.d_model, cfg.mlp_hidden});
        shapes.push_back({p + "w_up", cfg.d_model, cfg.mlp_hidden});
        shapes.push_back({p + "w_down", cfg.mlp_hidden, cfg.d_model});
    }
    shapes.push_back({"final_norm", 1, cfg.d_model});
    shapes.push_back({"lm_head", cfg.d_model, cfg.vocab_size});
    return shapes;
}

void WeightStore::validate_against(const ModelConfig& cfg) const {
    cfg.validate();
    auto shapes = layout(cfg);
    if (shapes.size() != order_.size()) {
        throw WeightLoadError(WeightLoadError::Kind::bad_layout,
                              "weight store holds " + std::to_string(order_.size()) +
                                  " tensors, config implies " + std::to_string(shapes.size()));
    }
    for (const auto& s : shapes) {
        if (!contains(s.name)) {
            throw WeightLoadError(WeightLoadError::Kind::bad_layout,
                                  "missing tensor '" + s.name + "'");
        }
        const Matrix& m = get(s.name);
        if (m.rows != s.rows || m.cols != s.cols) {
            throw WeightLoadError(WeightLoadError::Kind::bad_layout,
                                  "tensor '" + s.name + "' has shape " + std::to_string(m.rows) +
                                      "x" + std::to_string(m.cols) + ", expected " +
                                      std::to_string(s.rows) + "x" + std::to_string(s.cols));
        }
        if (!m.all_finite()) {
            throw WeightLoadError(WeightLoadError::Kind::bad_values,
                                  "tensor '" + s.name + "' has non-finite entries");
        }
    }
}

bool WeightStore::operator==(const WeightStore& other) const {
    if (order_ != other.order_) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        const Matrix& a = tensors_[i];
        const Matrix& b = other.tensors_[i];
        if (a.rows != b.rows || a.cols != b.cols || a.data != b.data) return false;
    }
    return true;
}

WeightStore init_random(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    WeightStore store;
    for (const auto& s : WeightStore::layout(cfg)) {
        Matrix m(s.rows, s.cols, 0.0);
        for (double& x : m.data) x = (2.0 * unit_double(rng) - 1.0) * bound;
        store.put(s.name, std::move(m));
    }
    return store;
}

// ------------------------------------------------------------------ decoder

AttentionSpec DecoderSpec::attention_spec(const ModelConfig& cfg) const {
    AttentionSpec a;
    a.backend = backend;
    a.head_dim = cfg.head_dim();
    a.tile_size = tile_size;
    a.block_size = block_size;
    switch (pe) {
        case PeStrategy::sinusoidal: a.pe = PeMode::none; break;
        case PeStrategy::rope: a.pe = PeMode::rope; break;
        case PeStrategy::rerope: a.pe = PeMode::rerope; break;
    }
    a.rope = RopeConfig{cfg.head_dim(), cfg.rope_base};
    a.rerope_window = window;
    a.rerope_leak = leak_factor;
    return a;
}

void DecoderSpec::validate(const ModelConfig& cfg) const {
    cfg.validate();
    if (pe == PeStrategy::sinusoidal && cfg.d_model % 2 != 0) {
        throw ConfigError("sinusoidal positional encoding needs an even d_model");
    }
    if (backend == AttnBackend::streaming && n_sink + window == 0) {
        throw ConfigError("streaming backend needs n_sink + window >= 1");
    }
    attention_spec(cfg).validate();
}

Decoder::Decoder(const WeightStore& weights, const ModelConfig& cfg, const DecoderSpec& spec)
    : weights_(weights), cfg_(cfg), spec_(spec), attn_(spec.attention_spec(cfg)) {
    spec_.validate(cfg_);
    weights_.validate_against(cfg_);

    std::size_t hd = cfg_.head_dim();
    caches_.reserve(cfg_.n_layers * cfg_.n_heads);
    for (std::size_t i = 0; i < cfg_.n_layers * cfg_.n_heads; ++i) {
        switch (spec_.backend) {
            case AttnBackend::naive:
            case AttnBackend::flash:
                caches_.emplace_back(ContiguousCache(hd));
                break;
            case AttnBackend::streaming:
                caches_.emplace_back(SinkCache(hd, spec_.n_sink, spec_.window));
                break;
            case AttnBackend::paged:
                caches_.emplace_back(PagedCache(hd, spec_.block_size));
                break;
        }
    }
}

Decoder::HeadCache& Decoder::cache_at(std::size_t layer, std::size_t head) {
    return caches_[layer * cfg_.n_heads + head];
}

void Decoder::note_cache_usage() {
    for (const auto& c : caches_) {
        std::size_t slots = std::visit([](const auto& cache) { return cache.slot_count(); }, c);
        peak_slots_ = std::max(peak_slots_, slots);
    }
}

Matrix Decoder::embed(std::span<const TokenId> tokens, std::size_t start_pos) const {
    const Matrix& table = weights_.get("tok_embed");
    Matrix x(tokens.size(), cfg_.d_model, 0.0);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t] >= cfg_.vocab_size) {
            throw InputError("token id " + std::to_string(tokens[t]) + " out of vocab (" +
                             std::to_string(cfg_.vocab_size) + ")");
        }
        auto src = table.row(tokens[t]);
        std::copy(src.begin(), src.end(), x.row(t).begin());
        if (spec_.pe == PeStrategy::sinusoidal) {
            Vector pe = sinusoidal_encoding(start_pos + t, cfg_.d_model);
            for (std::size_t c = 0; c < cfg_.d_model; ++c) x.at(t, c) += pe[c];
        }
    }
    return x;
}

Matrix Decoder::attention_block(std::size_t layer, const Matrix& normed, std::size_t start_pos) {
    std::string p = "layers." + std::to_string(layer) + ".";
    Matrix q_all = matmul(normed, weights_.get(p + "wq"));
    Matrix k_all = matmul(normed, weights_.get(p + "wk"));
    Matrix v_all = matmul(normed, weights_.get(p + "wv"));

    std::size_t n = normed.rows;
    std::size_t hd = cfg_.head_dim();
    Matrix heads_out(n, cfg_.d_model, 0.0);

    for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
        std::size_t col0 = h * hd;
        Matrix q(n, hd, 0.0), k(n, hd, 0.0), v(n, hd, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t c = 0; c < hd; ++c) {
                q.at(t, c) = q_all.at(t, col0 + c);
                k.at(t, c) = k_all.at(t, col0 + c);
                v.at(t, c) = v_all.at(t, col0 + c);
            }
        }

        HeadCache& hc = cache_at(layer, h);
        Matrix out;  // n x hd

        if (spec_.backend == AttnBackend::naive || spec_.backend == AttnBackend::flash) {
            auto& cache = std::get<ContiguousCache>(hc);
            for (std::size_t t = 0; t < n; ++t) {
                cache.append(k.row_vector(t), v.row_vector(t));
            }
            Matrix kk = cache.gather_keys();
            Matrix vv = cache.gather_values();
            out = spec_.backend == AttnBackend::naive ? naive_attention(q, kk, vv, attn_)
                                                      : flash_attention(q, kk, vv, attn_);
        } else if (spec_.backend == AttnBackend::paged) {
            auto& cache = std::get<PagedCache>(hc);
            out = Matrix(n, hd, 0.0);
            for (std::size_t t = 0; t < n; ++t) {
                cache.append(k.row_vector(t), v.row_vector(t));
                Vector o = paged_attention(q.row_vector(t), cache, attn_, start_pos + t);
                std::copy(o.data.begin(), o.data.end(), out.row(t).begin());
            }
        } else {
            auto& cache = std::get<SinkCache>(hc);
            out = Matrix(n, hd, 0.0);
            for (std::size_t t = 0; t < n; ++t) {
                cache.append(k.row_vector(t), v.row_vector(t));
                Vector o = streaming_attention(q.row_vector(t), cache, attn_);
                std::copy(o.data.begin(), o.data.end(), out.row(t).begin());
            }
        }

        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t c = 0; c < hd; ++c) heads_out.at(t, col0 + c) = out.at(t, c);
        }
    }

    return matmul(heads_out, weights_.get(p + "wo"));
}

Matrix Decoder::run_layers(Matrix x, std::size_t start_pos) {
    std::size_t n = x.rows;
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        std::string p = "layers." + std::to_string(l) + ".";
        const Matrix& attn_gain = weights_.get(p + "attn_norm");
        const Matrix& mlp_gain = weights_.get(p + "mlp_norm");

        Matrix normed(n, cfg_.d_model, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            rms_norm_inplace(x.row(t), attn_gain.row(0), kRmsEps, normed.row(t));
        }
        Matrix attn_out = attention_block(l, normed, start_pos);
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += attn_out.data[i];

        for (std::size_t t = 0; t < n; ++t) {
            rms_norm_inplace(x.row(t), mlp_gain.row(0), kRmsEps, normed.row(t));
        }
        Matrix gate = matmul(normed, weights_.get(p + "w_gate"));
        Matrix up = matmul(normed, weights_.get(p + "w_up"));
        for (std::size_t i = 0; i < gate.data.size(); ++i) {
            gate.data[i] = silu(gate.data[i]) * up.data[i];
        }
        Matrix down = matmul(gate, weights_.get(p + "w_down"));
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += down.data[i];

        if (!x.all_finite()) {
            throw NumericError("non-finite activation after layer " + std::to_string(l));
        }
    }
    return x;
}

Matrix Decoder::prefill(std::span<const TokenId> tokens) {
    if (tokens.empty()) throw InputError("prefill: empty token sequence");
    std::size_t start = position_;
    Matrix x = embed(tokens, start);
    x = run_layers(std::move(x), start);
    position_ += tokens.size();
    note_cache_usage();

    const Matrix& final_gain = weights_.get("final_norm");
    Matrix normed(x.rows, cfg_.d_model, 0.0);
    for (std::size_t t = 0; t < x.rows; ++t) {
        rms_norm_inplace(x.row(t), final_gain.row(0), kRmsEps, normed.row(t));
    }
    return matmul(normed, weights_.get("lm_head"));
}

Vector Decoder::step(TokenId token) {
    TokenId toks[1] = {token};
    Matrix logits = prefill(std::span<const TokenId>(toks, 1));
    return logits.row_vector(0);
}

Matrix forward(std::span<const TokenId> tokens, const WeightStore& weights,
               const ModelConfig& cfg, const DecoderSpec& spec) {
    Decoder dec(weights, cfg, spec);
    return dec.prefill(tokens);
}

DecodeResult greedy_decode_traced(std::span<const TokenId> context, std::size_t n_new,
                                  TokenId stop_id, const WeightStore& weights,
                                  const ModelConfig& cfg, const DecoderSpec& spec) {
    if (context.empty()) throw InputError("greedy_decode: empty context");
    if (n_new < 1) throw InputError("greedy_decode: n_new must be >= 1");

    Decoder dec(weights, cfg, spec);
    Matrix logits = dec.prefill(context);
    DecodeResult result;
    TokenId next = static_cast<TokenId>(argmax(logits.row(logits.rows - 1)));
    result.tokens.push_back(next);
    while (result.tokens.size() < n_new && next != stop_id) {
        next = static_cast<TokenId>(argmax(dec.step(next)));
        result.tokens.push_back(next);
    }
    result.peak_cache_slots = dec.peak_cache_slots();
    return result;
}

std::vector<TokenId> greedy_decode(std::span<const TokenId> context, std::size_t n_new,
                                   TokenId stop_id, const WeightStore& weights,
                                   const ModelConfig& cfg, const DecoderSpec& spec) {
    return greedy_decode_traced(context, n_new, stop_id, weights, cfg, spec).tokens;
}

// ----------------------------------------------------------- weight file IO

namespace {

using nlohmann::ordered_json;

void append_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

ordered_json config_to_json(const ModelConfig& cfg) {
    return ordered_json{{"vocab_size", cfg.vocab_size},
                        {"d_model", cfg.d_model},
                        {"n_layers", cfg.n_layers},
                        {"n_heads", cfg.n_heads},
                        {"mlp_hidden", cfg.mlp_hidden},
                        {"max_pretrain_len", cfg.max_pretrain_len},
                        {"rope_base", cfg.rope_base}};
}

ModelConfig config_from_json(const ordered_json& j) {
    ModelConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.n_layers = j.at("n_layers").get<std::size_t>();
    cfg.n_heads = j.at("n_heads").get<std::size_t>();
    cfg.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
    cfg.max_pretrain_len = j.at("max_pretrain_len").get<std::size_t>();
    cfg.rope_base = j.at("rope_base").get<double>();
    return cfg;
}

}  // namespace

void save_weights(const WeightStore& store, const ModelConfig& cfg, const std::string& path) {
    store.validate_against(cfg);

    ordered_json header;
    header["format"] = kWeightFormat;
    header["version"] = kWeightVersion;
    header["config"] = config_to_json(cfg);

    ordered_json tensors = ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& s : WeightStore::layout(cfg)) {
        const Matrix& m = store.get(s.name);
        tensors.push_back(ordered_json{
            {"name", s.name}, {"rows", m.rows}, {"cols", m.cols}, {"offset", offset}});
        offset += m.data.size() * sizeof(double);
    }
    header["tensors"] = std::move(tensors);
    header["payload_bytes"] = offset;

    std::string head = header.dump();
    std::string blob;
    blob.reserve(8 + head.size() + offset);
    append_u64_le(blob, head.size());
    blob += head;
    for (const auto& s : WeightStore::layout(cfg)) {
        const Matrix& m = store.get(s.name);
        // Raw little-endian doubles; this writer targets little-endian hosts.
        blob.append(reinterpret_cast<const char*>(m.data.data()),
                    m.data.size() * sizeof(double));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw WeightLoadError(WeightLoadError::Kind::io, "cannot open for write: " + path);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw WeightLoadError(WeightLoadError::Kind::io, "short write: " + path);
}

LoadedModel load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw WeightLoadError(WeightLoadError::Kind::io, "cannot open: " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (blob.size() < 8) {
        throw WeightLoadError(WeightLoadError::Kind::truncated, "file shorter than length prefix");
    }
    std::uint64_t head_len = read_u64_le(reinterpret_cast<const unsigned char*>(blob.data()));
    if (8 + head_len > blob.size()) {
        throw WeightLoadError(WeightLoadError::Kind::truncated, "header extends past end of file");
    }

    ordered_json header;
    try {
        header = ordered_json::parse(blob.substr(8, head_len));
    } catch (const nlohmann::json::exception& e) {
        throw WeightLoadError(WeightLoadError::Kind::bad_header,
                              std::string("header is not valid JSON: ") + e.what());
    }

    ModelConfig cfg;
    std::uint64_t payload_bytes = 0;
    std::vector<std::tuple<std::string, std::size_t, std::size_t, std::uint64_t>> entries;
    try {
        if (header.at("format").get<std::string>() != kWeightFormat) {
            throw WeightLoadError(WeightLoadError::Kind::bad_header, "unknown format tag");
        }
        if (header.at("version").get<int>() != kWeightVersion) {
            throw WeightLoadError(WeightLoadError::Kind::bad_header, "unsupported version");
        }
        cfg = config_from_json(header.at("config"));
        payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
        for (const auto& t : header.at("tensors")) {
            entries.emplace_back(t.at("name").get<std::string>(), t.at("rows").get<std::size_t>(),
                                 t.at("cols").get<std::size_t>(),
                                 t.at("offset").get<std::uint64_t>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw WeightLoadError(WeightLoadError::Kind::bad_header,
                              std::string("header missing or mistyped field: ") + e.what());
    }

    // Offsets must tile the payload contiguously in header order.
    std::uint64_t expect_offset = 0;
    for (const auto& [name, rows, cols, off] : entries) {
        if (off != expect_offset) {
            throw WeightLoadError(WeightLoadError::Kind::bad_layout,
                                  "tensor '" + name + "' offset " + std::to_string(off) +
                                      " does not match expected " + std::to_string(expect_offset));
        }
        expect_offset += static_cast<std::uint64_t>(rows) * cols * sizeof(double);
    }
    if (expect_offset != payload_bytes) {
        throw WeightLoadError(WeightLoadError::Kind::bad_layout,
                              "payload_bytes disagrees with tensor shapes");
    }

    std::size_t actual_payload = blob.size() - 8 - head_len;
    if (actual_payload < payload_bytes) {
        throw WeightLoadError(WeightLoadError::Kind::truncated,
                              "payload holds " + std::to_string(actual_payload) + " bytes, header promises " +
                                  std::to_string(payload_bytes));
    }
    if (actual_payload > payload_bytes) {
        throw WeightLoadError(WeightLoadError::Kind::bad_layout, "trailing bytes after payload");
    }

    LoadedModel loaded;
    loaded.config = cfg;
    const char* payload = blob.data() + 8 + head_len;
    for (const auto& [name, rows, cols, off] : entries) {
        Matrix m(rows, cols, 0.0);
        std::memcpy(m.data.data(), payload + off, rows * cols * sizeof(double));
        if (!m.all_finite()) {
            throw WeightLoadError(WeightLoadError::Kind::bad_values,
                                  "tensor '" + name + "' has non-finite entries");
        }
        loaded.weights.put(name, std::move(m));
    }
    try {
        loaded.weights.validate_against(cfg);
    } catch (const ConfigError& e) {
        throw WeightLoadError(WeightLoadError::Kind::bad_header,
                              std::string("config invalid: ") + e.what());
    }
    return loaded;
}

}  // namespace ctxlab
