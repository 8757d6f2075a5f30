#include "ctxlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctxlab/errors.hpp"

namespace ctxlab {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(Language lang) {
    switch (lang) {
        case Language::python: return "python";
        case Language::csharp: return "csharp";
        case Language::java: return "java";
        case Language::other: return "other";
    }
    return "?";
}

Language language_from_string(std::string_view name) {
    if (name == "python") return Language::python;
    if (name == "csharp") return Language::csharp;
    if (name == "java") return Language::java;
    return Language::other;
}

// ------------------------------------------------------------------- corpus

std::vector<CompletionTask> load_corpus(const std::string& path,
                                        std::vector<std::string>* warnings) {
    std::ifstream f(path);
    if (!f) throw CorpusError("cannot open corpus: " + path);

    std::vector<CompletionTask> tasks;
    std::string line;
    long line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw CorpusError("corpus line " + std::to_string(line_no) +
                                  ": malformed JSON: " + e.what(),
                              line_no);
        }
        if (!j.is_object()) {
            throw CorpusError("corpus line " + std::to_string(line_no) + ": expected an object",
                              line_no);
        }
        auto field = [&](const char* name) -> const json& {
            auto it = j.find(name);
            if (it == j.end()) {
                throw CorpusError("corpus line " + std::to_string(line_no) +
                                      ": missing field '" + name + "'",
                                  line_no);
            }
            return *it;
        };
        CompletionTask task;
        const json& id = field("id");
        if (id.is_string()) {
            task.id = id.get<std::string>();
        } else if (id.is_number_integer()) {
            task.id = std::to_string(id.get<long long>());
        } else {
            throw CorpusError("corpus line " + std::to_string(line_no) + ": field 'id' must be a string",
                              line_no);
        }
        const json& lang = field("language");
        if (!lang.is_string()) {
            throw CorpusError("corpus line " + std::to_string(line_no) +
                                  ": field 'language' must be a string",
                              line_no);
        }
        task.language = language_from_string(lang.get<std::string>());
        for (const char* name : {"context", "ground_truth"}) {
            const json& v = field(name);
            if (!v.is_string() || v.get<std::string>().empty()) {
                throw CorpusError("corpus line " + std::to_string(line_no) + ": field '" +
                                      name + "' must be a non-empty string",
                                  line_no);
            }
        }
        task.context = j["context"].get<std::string>();
        task.ground_truth = j["ground_truth"].get<std::string>();
        tasks.push_back(std::move(task));
    }

    if (tasks.empty() && warnings) {
        warnings->push_back("corpus '" + path + "' contains no tasks");
    }
    return tasks;
}

// ---------------------------------------------------------------- tokenizer

std::vector<TokenId> tokenize(std::string_view text) {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (unsigned char b : text) ids.push_back(static_cast<TokenId>(b));
    return ids;
}

std::string detokenize(std::span<const TokenId> ids) {
    std::string out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
        if (id > 255) {
            throw DecodeError("detokenize: id " + std::to_string(id) +
                              " has no byte or special mapping");
        }
        out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    }
    return out;
}

// ----------------------------------------------------------------- run_eval

namespace {

std::string strategy_name(const DecoderSpec& spec) {
    return std::string(to_string(spec.pe)) + "+" + to_string(spec.backend);
}

}  // namespace

RunResult run_eval(const RunConfig& config, const std::vector<CompletionTask>& corpus) {
    // Strategy validation happens before any task is touched, so an
    // unsupported combination can never fail mid-run.
    ModelConfig model_cfg = config.model;
    WeightStore weights;
    if (!config.weights_path.empty()) {
        LoadedModel loaded = load_weights(config.weights_path);
        model_cfg = loaded.config;
        weights = std::move(loaded.weights);
    } else {
        weights = init_random(model_cfg, config.seed);
    }
    config.decoder.validate(model_cfg);
    if (config.gen_len < 1) throw ConfigError("run_eval: gen_len must be >= 1");
    if (corpus.empty()) throw InputError("run_eval: empty corpus");

    TokenId stop = config.stop_at_newline ? kNewlineToken : kNoStopId;

    RunResult result;
    std::vector<std::pair<GroupKey, ScoredPair>> scored;
    scored.reserve(corpus.size());

    for (const CompletionTask& task : corpus) {
        std::vector<TokenId> context = tokenize(task.context);

        auto t0 = std::chrono::steady_clock::now();
        DecodeResult decoded = greedy_decode_traced(context, config.gen_len, stop, weights,
                                                    model_cfg, config.decoder);
        auto t1 = std::chrono::steady_clock::now();

        TaskRecord rec;
        rec.id = task.id;
        rec.language = task.language;
        rec.raw_generation = detokenize(decoded.tokens);
        rec.prediction = rec.raw_generation;
        if (config.stop_at_newline && !config.score_raw) {
            std::size_t nl = rec.prediction.find('\n');
            if (nl != std::string::npos) rec.prediction.resize(nl);
        }
        ScoredPair pair = score_pair(rec.prediction, task.ground_truth);
        rec.em = pair.em;
        rec.edit_sim = pair.edit_sim;
        rec.wall_ms = config.measure_time
                          ? std::chrono::duration<double, std::milli>(t1 - t0).count()
                          : 0.0;
        rec.peak_cache_slots = decoded.peak_cache_slots;
        rec.context_tokens = context.size();
        rec.generated_tokens = decoded.tokens.size();
        rec.extrapolation = context.size() > model_cfg.max_pretrain_len;

        scored.emplace_back(GroupKey{to_string(task.language), strategy_name(config.decoder)},
                            std::move(pair));
        result.records.push_back(std::move(rec));
    }

    EvalReport report = aggregate(scored);

    // Join metric groups with telemetry; one row per language present.
    for (const auto& [key, stats] : report.groups) {
        ReportRow row;
        row.language = key.language;
        row.pe = to_string(config.decoder.pe);
        row.attn = to_string(config.decoder.backend);
        row.em_percent = stats.em_percent;
        row.mean_edit_sim = stats.mean_edit_sim;
        row.task_count = stats.task_count;
        double wall_sum = 0.0;
        std::size_t peak = 0;
        for (const TaskRecord& rec : result.records) {
            if (to_string(rec.language) != key.language) continue;
            wall_sum += rec.wall_ms;
            peak = std::max(peak, rec.peak_cache_slots);
        }
        row.mean_wall_ms = stats.task_count > 0 ? wall_sum / static_cast<double>(stats.task_count) : 0.0;
        row.peak_cache_slots = peak;
        result.rows.push_back(std::move(row));
    }
    std::sort(result.rows.begin(), result.rows.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::tie(a.language, a.pe, a.attn) < std::tie(b.language, b.pe, b.attn);
    });
    std::stable_sort(result.records.begin(), result.records.end(),
                     [](const TaskRecord& a, const TaskRecord& b) { return a.id < b.id; });
    return result;
}

// -------------------------------------------------------------------- stats

CorpusStats corpus_stats(const std::vector<CompletionTask>& corpus, TokenizeFn tok) {
    if (corpus.empty()) throw InputError("corpus_stats: empty corpus");

    std::map<Language, std::vector<std::size_t>> lengths;
    for (const CompletionTask& task : corpus) {
        lengths[task.language].push_back(tok(task.context).size());
    }

    CorpusStats stats;
    for (auto& [lang, ls] : lengths) {
        std::sort(ls.begin(), ls.end());
        auto nearest_rank = [&](double p) {
            std::size_t rank = static_cast<std::size_t>(
                std::ceil(p * static_cast<double>(ls.size())));
            if (rank < 1) rank = 1;
            return ls[rank - 1];
        };
        LanguageStats s;
        s.count = ls.size();
        double sum = 0.0;
        for (std::size_t v : ls) sum += static_cast<double>(v);
        s.avg_tokens = sum / static_cast<double>(ls.size());
        s.q25 = nearest_rank(0.25);
        s.q50 = nearest_rank(0.50);
        s.q75 = nearest_rank(0.75);
        stats.per_language.emplace(lang, s);
    }
    return stats;
}

// ------------------------------------------------------------------ reports

ReportFormat report_format_from_string(std::string_view name) {
    if (name == "json") return ReportFormat::json;
    if (name == "csv") return ReportFormat::csv;
    throw ConfigError("unknown report format '" + std::string(name) + "'");
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string render_csv(const std::vector<ReportRow>& rows) {
    std::string out =
        "language,pe,attn,em_percent,mean_edit_sim,task_count,mean_wall_ms,peak_cache_slots\n";
    for (const ReportRow& r : rows) {
        out += r.language + "," + r.pe + "," + r.attn + ",";
        out += r.em_percent ? fmt_double(*r.em_percent) : "";
        out += ",";
        out += r.mean_edit_sim ? fmt_double(*r.mean_edit_sim) : "";
        out += ",";
        out += std::to_string(r.task_count) + "," + fmt_double(r.mean_wall_ms) + "," +
               std::to_string(r.peak_cache_slots) + "\n";
    }
    return out;
}

std::string render_json(const std::vector<ReportRow>& rows) {
    ordered_json doc;
    doc["rows"] = ordered_json::array();
    for (const ReportRow& r : rows) {
        ordered_json jr;
        jr["language"] = r.language;
        jr["pe"] = r.pe;
        jr["attn"] = r.attn;
        if (r.em_percent) {
            jr["em_percent"] = *r.em_percent;
        } else {
            jr["em_percent"] = nullptr;
        }
        if (r.mean_edit_sim) {
            jr["mean_edit_sim"] = *r.mean_edit_sim;
        } else {
            jr["mean_edit_sim"] = nullptr;
        }
        jr["task_count"] = r.task_count;
        jr["mean_wall_ms"] = r.mean_wall_ms;
        jr["peak_cache_slots"] = r.peak_cache_slots;
        doc["rows"].push_back(std::move(jr));
    }
    return doc.dump(2) + "\n";
}

}  // namespace

std::string render_report(const std::vector<ReportRow>& rows, ReportFormat format) {
    return format == ReportFormat::csv ? render_csv(rows) : render_json(rows);
}

void emit_report(const std::vector<ReportRow>& rows, ReportFormat format,
                 const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open report path for write: " + path);
    f << render_report(rows, format);
    if (!f) throw IoError("short write: " + path);
}

std::string render_corpus_stats_csv(const CorpusStats& stats) {
    std::string out = "language,avg_tokens,q25,q50,q75,count\n";
    for (const auto& [lang, s] : stats.per_language) {
        out += std::string(to_string(lang)) + "," + fmt_double(s.avg_tokens) + "," +
               std::to_string(s.q25) + "," + std::to_string(s.q50) + "," +
               std::to_string(s.q75) + "," + std::to_string(s.count) + "\n";
    }
    return out;
}

void write_task_records(const std::vector<TaskRecord>& records, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open records path for write: " + path);
    for (const TaskRecord& r : records) {
        ordered_json j;
        j["id"] = r.id;
        j["language"] = to_string(r.language);
        j["prediction"] = r.prediction;
        j["raw_generation"] = r.raw_generation;
        j["em"] = r.em;
        j["edit_sim"] = r.edit_sim;
        j["wall_ms"] = r.wall_ms;
        j["peak_cache_slots"] = r.peak_cache_slots;
        j["context_tokens"] = r.context_tokens;
        j["generated_tokens"] = r.generated_tokens;
        j["regime"] = r.extrapolation ? "extrapolation" : "within_pretrain";
        // Generations are raw byte streams and may not be valid UTF-8;
        // undecodable bytes are replaced rather than aborting the dump.
        f << j.dump(-1, ' ', false, ordered_json::error_handler_t::replace) << "\n";
    }
    if (!f) throw IoError("short write: " + path);
}

ModelConfig parse_model_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");

    ModelConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "vocab_size") cfg.vocab_size = value.get<std::size_t>();
        else if (key == "d_model") cfg.d_model = value.get<std::size_t>();
        else if (key == "n_layers") cfg.n_layers = value.get<std::size_t>();
        else if (key == "n_heads") cfg.n_heads = value.get<std::size_t>();
        else if (key == "mlp_hidden") cfg.mlp_hidden = value.get<std::size_t>();
        else if (key == "max_pretrain_len") cfg.max_pretrain_len = value.get<std::size_t>();
        else if (key == "rope_base") cfg.rope_base = value.get<double>();
        else throw ConfigError("model config: unknown field '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

}  // namespace ctxlab
