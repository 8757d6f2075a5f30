#pragma once

// Experiment harness: JSONL corpus loading, byte-level tokenization, greedy
// next-line completion runs across positional/attention strategies, corpus
// statistics, and CSV/JSON report emission. This is the CLI's engine.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxlab/metrics.hpp"
#include "ctxlab/model.hpp"

namespace ctxlab {

enum class Language { python, csharp, java, other };
const char* to_string(Language lang);
Language language_from_string(std::string_view name);  // unrecognized -> other

struct CompletionTask {
    std::string id;
    Language language = Language::other;
    std::string context;       // non-empty
    std::string ground_truth;  // non-empty
};

// One JSON object per line with fields id, language, context, ground_truth.
// Malformed lines fail fast with their 1-based line number. An empty file
// yields an empty list and a warning.
std::vector<CompletionTask> load_corpus(const std::string& path,
                                        std::vector<std::string>* warnings = nullptr);

// Byte-level tokenizer: ids 0-255 are raw bytes; ids above 255 are reserved
// for specials and currently never produced. detokenize(tokenize(s)) == s
// for any byte string.
std::vector<TokenId> tokenize(std::string_view text);
std::string detokenize(std::span<const TokenId> ids);  // throws DecodeError on unknown id

inline constexpr TokenId kNewlineToken = static_cast<TokenId>('\n');

struct RunConfig {
    // Model source: a weight container path, or (model, seed) when empty.
    std::string weights_path;
    ModelConfig model;
    std::uint64_t seed = 0;

    DecoderSpec decoder;
    std::size_t gen_len = 100;
    bool stop_at_newline = true;  // also truncates scoring at the first newline
    bool score_raw = false;       // score the full generation window instead
    // Wall-clock telemetry; switch off to make reports byte-reproducible.
    bool measure_time = true;
};

struct TaskRecord {
    std::string id;
    Language language = Language::other;
    std::string prediction;       // text that was scored
    std::string raw_generation;   // full detokenized generation
    bool em = false;
    double edit_sim = 0.0;
    double wall_ms = 0.0;
    std::size_t peak_cache_slots = 0;
    std::size_t context_tokens = 0;
    std::size_t generated_tokens = 0;
    bool extrapolation = false;  // context_tokens > model.max_pretrain_len
};

struct ReportRow {
    std::string language;
    std::string pe;
    std::string attn;
    std::optional<double> em_percent;
    std::optional<double> mean_edit_sim;
    std::size_t task_count = 0;
    double mean_wall_ms = 0.0;
    std::size_t peak_cache_slots = 0;  // max over the group's tasks
};

struct RunResult {
    std::vector<ReportRow> rows;       // sorted by (language, pe, attn)
    std::vector<TaskRecord> records;   // sorted by task id
};

// Validates the strategy combination before touching any task, then runs
// greedy next-line completion over the corpus and aggregates per language.
RunResult run_eval(const RunConfig& config, const std::vector<CompletionTask>& corpus);

struct LanguageStats {
    std::size_t count = 0;
    double avg_tokens = 0.0;
    std::size_t q25 = 0;  // nearest-rank quartiles of context token lengths
    std::size_t q50 = 0;
    std::size_t q75 = 0;
};

struct CorpusStats {
    std::map<Language, LanguageStats> per_language;
};

using TokenizeFn = std::vector<TokenId> (*)(std::string_view);

CorpusStats corpus_stats(const std::vector<CompletionTask>& corpus, TokenizeFn tok = &tokenize);

enum class ReportFormat { json, csv };
ReportFormat report_format_from_string(std::string_view name);

// CSV: header + one line per row, columns
//   language,pe,attn,em_percent,mean_edit_sim,task_count,mean_wall_ms,peak_cache_slots
// '.' decimal separator, empty cells for null scores. JSON: {"rows": [...]}
// with null for missing scores and identical values.
std::string render_report(const std::vector<ReportRow>& rows, ReportFormat format);
void emit_report(const std::vector<ReportRow>& rows, ReportFormat format,
                 const std::string& path);

std::string render_corpus_stats_csv(const CorpusStats& stats);

// Per-task records as JSONL, one object per record, sorted by id.
void write_task_records(const std::vector<TaskRecord>& records, const std::string& path);

// Lenient ModelConfig reader for CLI config files: absent fields keep their
// defaults, unknown fields are rejected.
ModelConfig parse_model_config(const std::string& json_text);

}  // namespace ctxlab
