// ctxlab command line: run completion evaluations, print corpus statistics,
// and generate seeded weight containers.
//
//   ctxlab run --corpus tasks.jsonl --pe rope --attn naive --out report.csv
//   ctxlab stats --corpus tasks.jsonl
//   ctxlab gen-weights --seed 7 --out toy.ctw

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ctxlab/errors.hpp"
#include "ctxlab/harness.hpp"

namespace {

ctxlab::ModelConfig read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ctxlab::ConfigError("cannot open model config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ctxlab::parse_model_config(ss.str());
}

int cmd_run(const ctxlab::RunConfig& cfg, const std::string& corpus_path,
            const std::string& out_path, const std::string& format_name,
            const std::string& per_task_path) {
    std::vector<std::string> warnings;
    auto corpus = ctxlab::load_corpus(corpus_path, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    ctxlab::RunResult result = ctxlab::run_eval(cfg, corpus);

    ctxlab::ReportFormat format = ctxlab::report_format_from_string(format_name);
    if (out_path.empty()) {
        std::cout << ctxlab::render_report(result.rows, format);
    } else {
        ctxlab::emit_report(result.rows, format, out_path);
        std::cerr << "report written to " << out_path << "\n";
    }
    if (!per_task_path.empty()) {
        ctxlab::write_task_records(result.records, per_task_path);
        std::cerr << "per-task records written to " << per_task_path << "\n";
    }
    return 0;
}

int cmd_stats(const std::string& corpus_path, const std::string& out_path) {
    std::vector<std::string> warnings;
    auto corpus = ctxlab::load_corpus(corpus_path, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    std::string csv = ctxlab::render_corpus_stats_csv(ctxlab::corpus_stats(corpus));
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw ctxlab::IoError("cannot open for write: " + out_path);
        f << csv;
    }
    return 0;
}

int cmd_gen_weights(const std::string& config_path, std::uint64_t seed,
                    const std::string& out_path) {
    ctxlab::ModelConfig cfg;  // defaults describe the toy model
    if (!config_path.empty()) cfg = read_config_file(config_path);
    ctxlab::WeightStore store = ctxlab::init_random(cfg, seed);
    ctxlab::save_weights(store, cfg, out_path);
    std::cerr << "weights written to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale context-length extrapolation laboratory"};
    app.require_subcommand(1);

    // --- run ---
    auto* run = app.add_subcommand("run", "evaluate next-line completion over a corpus");
    ctxlab::RunConfig rc;
    std::string corpus_path, out_path, per_task_path;
    std::string format_name = "csv";
    std::string pe_name = "rope", attn_name = "naive", config_path;
    bool no_timing = false, raw = false;

    run->add_option("--corpus", corpus_path, "JSONL corpus path")->required();
    run->add_option("--weights", rc.weights_path, "weight container path");
    run->add_option("--seed", rc.seed, "seed for random weights (when no --weights)");
    run->add_option("--config", config_path, "model config JSON (when no --weights)");
    run->add_option("--pe", pe_name, "positional strategy: sinusoidal|rope|rerope")
        ->check(CLI::IsMember({"sinusoidal", "rope", "rerope"}));
    run->add_option("--attn", attn_name, "attention backend: naive|flash|paged|streaming")
        ->check(CLI::IsMember({"naive", "flash", "paged", "streaming"}));
    run->add_option("--window", rc.decoder.window,
                    "rerope window / streaming rolling-cache size (default 512)");
    run->add_option("--leak-k", rc.decoder.leak_factor,
                    "rerope leak factor k >= 1, inf for a pure clamp (default inf)");
    run->add_option("--n-sink", rc.decoder.n_sink, "streaming attention sink tokens (default 4)");
    run->add_option("--block-size", rc.decoder.block_size, "paged cache block size (default 16)");
    run->add_option("--tile", rc.decoder.tile_size, "flash attention tile size (default 16)");
    run->add_option("--gen-len", rc.gen_len, "max tokens to generate per task (default 100)");
    run->add_flag("--raw", raw, "score the raw generation window, not the first line");
    run->add_flag("--no-timing", no_timing, "write wall_ms as 0 for byte-reproducible reports");
    run->add_option("--out", out_path, "report path (stdout when omitted)");
    run->add_option("--format", format_name, "report format: csv|json")
        ->check(CLI::IsMember({"csv", "json"}));
    run->add_option("--per-task", per_task_path, "also write per-task JSONL records here");

    // --- stats ---
    auto* stats = app.add_subcommand("stats", "Table-style corpus statistics per language");
    std::string stats_corpus, stats_out;
    stats->add_option("--corpus", stats_corpus, "JSONL corpus path")->required();
    stats->add_option("--out", stats_out, "output path (stdout when omitted)");

    // --- gen-weights ---
    auto* gen = app.add_subcommand("gen-weights", "write a seeded random weight container");
    std::string gen_config, gen_out;
    std::uint64_t gen_seed = 0;
    gen->add_option("--config", gen_config, "model config JSON file (defaults when omitted)");
    gen->add_option("--seed", gen_seed, "RNG seed (default 0)");
    gen->add_option("--out", gen_out, "output weight container path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            rc.decoder.pe = pe_name == "sinusoidal" ? ctxlab::PeStrategy::sinusoidal
                            : pe_name == "rerope"   ? ctxlab::PeStrategy::rerope
                                                    : ctxlab::PeStrategy::rope;
            rc.decoder.backend = attn_name == "flash"       ? ctxlab::AttnBackend::flash
                                 : attn_name == "paged"     ? ctxlab::AttnBackend::paged
                                 : attn_name == "streaming" ? ctxlab::AttnBackend::streaming
                                                            : ctxlab::AttnBackend::naive;
            rc.stop_at_newline = !raw;
            rc.score_raw = raw;
            rc.measure_time = !no_timing;
            if (!config_path.empty()) {
                if (!rc.weights_path.empty()) {
                    throw ctxlab::ConfigError("--config conflicts with --weights");
                }
                rc.model = read_config_file(config_path);
            }
            return cmd_run(rc, corpus_path, out_path, format_name, per_task_path);
        }
        if (stats->parsed()) return cmd_stats(stats_corpus, stats_out);
        if (gen->parsed()) return cmd_gen_weights(gen_config, gen_seed, gen_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
