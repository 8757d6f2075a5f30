#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ctxlab/harness.hpp"

using namespace ctxlab;
using nlohmann::json;

namespace {

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const std::string& name) {
        path = std::filesystem::temp_directory_path() /
               (name + "." + std::to_string(std::random_device{}()) + ".tmp");
    }
    ~TempFile() { std::filesystem::remove(path); }
};

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream f(path, std::ios::trunc);
    for (const auto& l : lines) f << l << "\n";
}

std::string task_line(const std::string& id, const std::string& lang, const std::string& context,
                      const std::string& truth) {
    json j;
    j["id"] = id;
    j["language"] = lang;
    j["context"] = context;
    j["ground_truth"] = truth;
    return j.dump();
}

ModelConfig byte_model() {
    ModelConfig cfg;
    cfg.vocab_size = 256;  // byte tokenizer needs the full byte range
    cfg.d_model = 32;
    cfg.n_layers = 1;
    cfg.n_heads = 4;
    cfg.mlp_hidden = 48;
    cfg.max_pretrain_len = 256;
    return cfg;
}

RunConfig base_run_config() {
    RunConfig rc;
    rc.model = byte_model();
    rc.seed = 11;
    rc.decoder.backend = AttnBackend::naive;
    rc.decoder.pe = PeStrategy::rope;
    rc.gen_len = 8;
    rc.measure_time = false;
    return rc;
}

std::vector<CompletionTask> small_corpus() {
    std::vector<CompletionTask> tasks;
    tasks.push_back({"t1", Language::python, "def add(a, b):\n    return a + b\n\nprint(", "?"});
    tasks.push_back({"t2", Language::java, "int total = 0;\nfor (int i = 0; i < n; i++) {", "?"});
    tasks.push_back({"t3", Language::csharp, "var list = new List<int>();\nlist.", "?"});
    return tasks;
}

}  // namespace

TEST_CASE("load_corpus reads valid lines in order") {
    TempFile tmp("corpus_ok");
    write_lines(tmp.path, {
                              task_line("a", "python", "x = ", "1"),
                              task_line("b", "java", "int y = ", "2;"),
                              task_line("c", "brainfuck", "+++", "---"),
                          });
    auto tasks = load_corpus(tmp.path.string());
    REQUIRE(tasks.size() == 3);
    CHECK(tasks[0].id == "a");
    CHECK(tasks[0].language == Language::python);
    CHECK(tasks[1].language == Language::java);
    CHECK(tasks[2].language == Language::other);  // unrecognized names fold to other
    CHECK(tasks[1].context == "int y = ");
    CHECK(tasks[1].ground_truth == "2;");
}

TEST_CASE("an empty corpus file yields an empty list plus a warning") {
    TempFile tmp("corpus_empty");
    write_lines(tmp.path, {});
    std::vector<std::string> warnings;
    auto tasks = load_corpus(tmp.path.string(), &warnings);
    CHECK(tasks.empty());
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("no tasks") != std::string::npos);
}

TEST_CASE("a malformed line fails fast naming its line number") {
    TempFile tmp("corpus_bad");
    write_lines(tmp.path, {
                              task_line("a", "python", "x = ", "1"),
                              "{ this is not json",
                              task_line("c", "java", "y = ", "2"),
                          });
    try {
        load_corpus(tmp.path.string());
        FAIL("expected CorpusError");
    } catch (const CorpusError& e) {
        CHECK(e.line_number == 2);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("missing fields and empty content are corpus errors") {
    TempFile tmp("corpus_fields");
    write_lines(tmp.path, {R"({"id":"a","language":"python","context":"x = "})"});
    CHECK_THROWS_AS(load_corpus(tmp.path.string()), CorpusError);

    write_lines(tmp.path, {R"({"id":"a","language":"python","context":"","ground_truth":"y"})"});
    CHECK_THROWS_AS(load_corpus(tmp.path.string()), CorpusError);
}

TEST_CASE("a missing corpus file is a corpus error") {
    CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), CorpusError);
}

TEST_CASE("tokenizer is byte-level") {
    auto ids = tokenize("A");
    REQUIRE(ids.size() == 1);
    CHECK(ids[0] == 65);

    auto lam = tokenize("λ");
    REQUIRE(lam.size() == 2);  // UTF-8 bytes 0xCE 0xBB
    CHECK(lam[0] == 0xCE);
    CHECK(lam[1] == 0xBB);
}

TEST_CASE("detokenize inverts tokenize on arbitrary text") {
    std::string sample = "def f(x):\n\treturn x * 2  # λ→∞\n";
    CHECK(detokenize(tokenize(sample)) == sample);

    std::mt19937_64 rng(5);
    std::string bytes;
    for (int i = 0; i < 500; ++i) bytes.push_back(static_cast<char>(rng() % 256));
    CHECK(detokenize(tokenize(bytes)) == bytes);
}

TEST_CASE("detokenize rejects ids without a mapping") {
    std::vector<TokenId> ids = {65, 256};
    CHECK_THROWS_AS(detokenize(ids), DecodeError);
}

TEST_CASE("corpus stats of a single task collapse to its length") {
    std::vector<CompletionTask> corpus = {{"a", Language::python, "abcde", "x"}};
    CorpusStats stats = corpus_stats(corpus);
    const LanguageStats& s = stats.per_language.at(Language::python);
    CHECK(s.count == 1);
    CHECK(s.avg_tokens == 5.0);
    CHECK(s.q25 == 5);
    CHECK(s.q50 == 5);
    CHECK(s.q75 == 5);
}

TEST_CASE("nearest-rank quartiles of lengths 1,2,3,4") {
    std::vector<CompletionTask> corpus;
    for (std::size_t len : {1u, 2u, 3u, 4u}) {
        corpus.push_back({"t" + std::to_string(len), Language::java,
                          std::string(len, 'x'), "y"});
    }
    CorpusStats stats = corpus_stats(corpus);
    const LanguageStats& s = stats.per_language.at(Language::java);
    CHECK(s.q25 == 1);
    CHECK(s.q50 == 2);
    CHECK(s.q75 == 3);
    CHECK(s.avg_tokens == 2.5);
}

TEST_CASE("a python group can reproduce the published reference quartiles") {
    // Five contexts with byte lengths 1979/3000/3207/3802/3802 average to
    // 3158 with quartiles 3000/3207/3802.
    std::vector<CompletionTask> corpus;
    std::size_t idx = 0;
    for (std::size_t len : {1979u, 3000u, 3207u, 3802u, 3802u}) {
        corpus.push_back({"p" + std::to_string(idx++), Language::python,
                          std::string(len, '#'), "pass"});
    }
    CorpusStats stats = corpus_stats(corpus);
    const LanguageStats& s = stats.per_language.at(Language::python);
    CHECK(s.count == 5);
    CHECK(s.avg_tokens == 3158.0);
    CHECK(s.q25 == 3000);
    CHECK(s.q50 == 3207);
    CHECK(s.q75 == 3802);
}

TEST_CASE("corpus stats reject an empty corpus and group by language") {
    CHECK_THROWS_AS(corpus_stats({}), InputError);

    std::vector<CompletionTask> corpus = {
        {"a", Language::python, "aa", "x"},
        {"b", Language::java, "bbbb", "x"},
        {"c", Language::python, "cccccc", "x"},
    };
    CorpusStats stats = corpus_stats(corpus);
    CHECK(stats.per_language.size() == 2);
    CHECK(stats.per_language.at(Language::python).count == 2);
    CHECK(stats.per_language.at(Language::python).avg_tokens == 4.0);
    CHECK(stats.per_language.at(Language::java).count == 1);
}

TEST_CASE("run_eval scores its own recorded generations at EM 100") {
    RunConfig rc = base_run_config();
    auto probe = small_corpus();
    RunResult first = run_eval(rc, probe);

    // Freeze each prediction as the ground truth; a rerun must match itself.
    std::vector<CompletionTask> fixture;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const TaskRecord& rec = first.records[i];
        if (rec.prediction.empty()) continue;
        CompletionTask t = probe[i];
        t.id = rec.id;
        t.ground_truth = rec.prediction;
        fixture.push_back(std::move(t));
    }
    REQUIRE(fixture.size() >= 2);  // the seed must give usable fixtures

    RunResult second = run_eval(rc, fixture);
    for (const ReportRow& row : second.rows) {
        CHECK(*row.em_percent == 100.0);
        CHECK(*row.mean_edit_sim == 100.0);
    }
}

TEST_CASE("gen_len 1 produces predictions of at most one token") {
    RunConfig rc = base_run_config();
    rc.gen_len = 1;
    RunResult result = run_eval(rc, small_corpus());
    for (const TaskRecord& rec : result.records) {
        CHECK(rec.generated_tokens == 1);
        CHECK(rec.raw_generation.size() <= 1);
    }
}

TEST_CASE("identical configurations render byte-identical reports") {
    RunConfig rc = base_run_config();
    auto corpus = small_corpus();
    RunResult a = run_eval(rc, corpus);
    RunResult b = run_eval(rc, corpus);
    CHECK(render_report(a.rows, ReportFormat::csv) == render_report(b.rows, ReportFormat::csv));
    CHECK(render_report(a.rows, ReportFormat::json) == render_report(b.rows, ReportFormat::json));
}

TEST_CASE("unsupported strategy combinations fail before any task runs") {
    RunConfig rc = base_run_config();
    rc.decoder.pe = PeStrategy::rerope;
    rc.decoder.backend = AttnBackend::flash;
    CHECK_THROWS_AS(run_eval(rc, small_corpus()), ConfigError);
}

TEST_CASE("the full strategy cross product either runs or is rejected up front") {
    std::vector<CompletionTask> corpus = {
        {"t", Language::python, "x = 1\ny = ", "2"},
    };
    int ran = 0, rejected = 0;
    for (PeStrategy pe : {PeStrategy::sinusoidal, PeStrategy::rope, PeStrategy::rerope}) {
        for (AttnBackend attn : {AttnBackend::naive, AttnBackend::flash, AttnBackend::paged,
                                 AttnBackend::streaming}) {
            RunConfig rc = base_run_config();
            rc.gen_len = 2;
            rc.decoder.pe = pe;
            rc.decoder.backend = attn;
            rc.decoder.window = 8;
            rc.decoder.block_size = 4;
            rc.decoder.tile_size = 4;
            bool is_supported = pe != PeStrategy::rerope || attn == AttnBackend::naive;
            if (is_supported) {
                RunResult result = run_eval(rc, corpus);
                CHECK(result.records.size() == 1);
                ++ran;
            } else {
                CHECK_THROWS_AS(run_eval(rc, corpus), ConfigError);
                ++rejected;
            }
        }
    }
    CHECK(ran == 9);
    CHECK(rejected == 3);
}

TEST_CASE("streaming holds peak cache slots at capacity while contiguous grows") {
    RunConfig rc = base_run_config();
    rc.gen_len = 1;
    rc.decoder.n_sink = 2;
    rc.decoder.window = 6;  // capacity 8

    std::vector<CompletionTask> corpus = {
        {"long", Language::python, std::string(32, 'a'), "b"},  // 4x capacity
    };

    rc.decoder.backend = AttnBackend::streaming;
    RunResult streaming = run_eval(rc, corpus);
    CHECK(streaming.records[0].peak_cache_slots == 8);

    rc.decoder.backend = AttnBackend::naive;
    RunResult contiguous = run_eval(rc, corpus);
    CHECK(contiguous.records[0].peak_cache_slots == 32);
}

TEST_CASE("an empty report renders as a header-only CSV") {
    std::string csv = render_report({}, ReportFormat::csv);
    CHECK(csv ==
          "language,pe,attn,em_percent,mean_edit_sim,task_count,mean_wall_ms,peak_cache_slots\n");
}

TEST_CASE("a one-row report renders as two CSV lines") {
    ReportRow row;
    row.language = "python";
    row.pe = "rope";
    row.attn = "naive";
    row.em_percent = 50.0;
    row.mean_edit_sim = 75.25;
    row.task_count = 2;
    row.mean_wall_ms = 1.5;
    row.peak_cache_slots = 40;
    std::string csv = render_report({row}, ReportFormat::csv);
    CHECK(csv ==
          "language,pe,attn,em_percent,mean_edit_sim,task_count,mean_wall_ms,peak_cache_slots\n"
          "python,rope,naive,50.000000,75.250000,2,1.500000,40\n");
}

TEST_CASE("JSON and CSV reports carry identical values") {
    RunConfig rc = base_run_config();
    RunResult result = run_eval(rc, small_corpus());

    std::string csv = render_report(result.rows, ReportFormat::csv);
    json doc = json::parse(render_report(result.rows, ReportFormat::json));

    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header
    std::size_t i = 0;
    while (std::getline(lines, line)) {
        const json& row = doc["rows"][i++];
        std::istringstream cells(line);
        std::string language, pe, attn, em, sim, count, wall, slots;
        std::getline(cells, language, ',');
        std::getline(cells, pe, ',');
        std::getline(cells, attn, ',');
        std::getline(cells, em, ',');
        std::getline(cells, sim, ',');
        std::getline(cells, count, ',');
        std::getline(cells, wall, ',');
        std::getline(cells, slots, ',');
        CHECK(language == row["language"].get<std::string>());
        CHECK(pe == row["pe"].get<std::string>());
        CHECK(attn == row["attn"].get<std::string>());
        CHECK(std::stod(em) == doctest::Approx(row["em_percent"].get<double>()).epsilon(1e-9));
        CHECK(std::stod(sim) == doctest::Approx(row["mean_edit_sim"].get<double>()).epsilon(1e-9));
        CHECK(std::stoul(count) == row["task_count"].get<std::size_t>());
        CHECK(std::stoul(slots) == row["peak_cache_slots"].get<std::size_t>());
    }
    CHECK(i == doc["rows"].size());
}

TEST_CASE("emit_report writes files and rejects unwritable paths") {
    TempFile tmp("report");
    ReportRow row;
    row.language = "java";
    row.pe = "rope";
    row.attn = "paged";
    row.task_count = 0;
    emit_report({row}, ReportFormat::csv, tmp.path.string());
    std::ifstream f(tmp.path);
    std::string header;
    std::getline(f, header);
    CHECK(header ==
          "language,pe,attn,em_percent,mean_edit_sim,task_count,mean_wall_ms,peak_cache_slots");
    std::string body;
    std::getline(f, body);
    CHECK(body == "java,rope,paged,,,0,0.000000,0");

    CHECK_THROWS_AS(emit_report({row}, ReportFormat::csv, "/nonexistent/dir/report.csv"), IoError);
}

TEST_CASE("per-task records round-trip through JSONL") {
    RunConfig rc = base_run_config();
    RunResult result = run_eval(rc, small_corpus());
    TempFile tmp("records");
    write_task_records(result.records, tmp.path.string());

    std::ifstream f(tmp.path);
    std::string line;
    std::size_t i = 0;
    while (std::getline(f, line)) {
        json j = json::parse(line);
        CHECK(j["id"].get<std::string>() == result.records[i].id);
        CHECK(j["em"].get<bool>() == result.records[i].em);
        CHECK(j["context_tokens"].get<std::size_t>() == result.records[i].context_tokens);
        CHECK(j["regime"].get<std::string>() == "within_pretrain");
        ++i;
    }
    CHECK(i == result.records.size());
}

TEST_CASE("model config parsing applies defaults and rejects unknown fields") {
    ModelConfig cfg = parse_model_config(R"({"d_model": 16, "n_heads": 2})");
    CHECK(cfg.d_model == 16);
    CHECK(cfg.n_heads == 2);
    CHECK(cfg.vocab_size == 256);  // untouched default
    CHECK_THROWS_AS(parse_model_config(R"({"d_mdoel": 16})"), ConfigError);
    CHECK_THROWS_AS(parse_model_config("not json"), ConfigError);
    CHECK_THROWS_AS(parse_model_config(R"({"d_model": 15, "n_heads": 2})"), ConfigError);
}

TEST_CASE("run_eval rejects an empty corpus after validating the strategy") {
    RunConfig rc = base_run_config();
    CHECK_THROWS_AS(run_eval(rc, {}), InputError);
}

TEST_CASE("numeric ids are accepted and stringified") {
    TempFile tmp("corpus_numid");
    write_lines(tmp.path, {R"({"id": 7, "language": "java", "context": "x", "ground_truth": "y"})"});
    auto tasks = load_corpus(tmp.path.string());
    REQUIRE(tasks.size() == 1);
    CHECK(tasks[0].id == "7");
}

TEST_CASE("raw mode scores the full generation window") {
    RunConfig rc = base_run_config();
    rc.stop_at_newline = false;
    rc.score_raw = true;
    rc.gen_len = 12;
    RunResult result = run_eval(rc, small_corpus());
    for (const TaskRecord& rec : result.records) {
        CHECK(rec.prediction == rec.raw_generation);
        CHECK(rec.generated_tokens == 12);  // nothing stops early without a stop id
    }
}

TEST_CASE("contexts beyond max_pretrain_len are labeled as extrapolation") {
    RunConfig rc = base_run_config();
    rc.model.max_pretrain_len = 16;
    rc.gen_len = 1;
    std::vector<CompletionTask> corpus = {
        {"short", Language::python, std::string(10, 'a'), "b"},
        {"long", Language::python, std::string(40, 'a'), "b"},
    };
    RunResult result = run_eval(rc, corpus);
    for (const TaskRecord& rec : result.records) {
        CHECK(rec.extrapolation == (rec.context_tokens > 16));
    }
}
