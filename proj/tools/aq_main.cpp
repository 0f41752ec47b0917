#include "aq/benchmark.hpp"
#include "aq/compiler.hpp"
#include "aq/errors.hpp"
#include "aq/eval.hpp"
#include "aq/gateway.hpp"
#include "aq/ingest.hpp"
#include "aq/plan.hpp"
#include "aq/remote.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitStage = 3;
constexpr int kExitConfig = 4;

struct RunConfig {
    std::string backend = "rule";  // "rule" or "remote"
    std::optional<double> tau;
    std::uint64_t seed = 0;
    bool trace = false;
    aq::RemoteConfig remote;
};

// Config file shape: {"backend": ..., "tau": ..., "seed": ..., "remote": {...}}.
void load_config_file(const fs::path& path, RunConfig& config) {
    std::ifstream input(path);
    if (!input) throw aq::ConfigError("cannot open config file " + path.string());
    json doc = json::parse(input, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw aq::ConfigError("config file " + path.string() + " is not a JSON object");
    for (const auto& [key, value] : doc.items()) {
        if (key == "backend") {
            config.backend = value.get<std::string>();
        } else if (key == "tau") {
            config.tau = value.get<double>();
        } else if (key == "seed") {
            config.seed = value.get<std::uint64_t>();
        } else if (key == "remote") {
            config.remote = aq::remote_config_from_json(value);
        } else {
            throw aq::ConfigError("unknown config key: " + key);
        }
    }
}

// Environment has the last word: AQ_BACKEND and AQ_TAU here, the AQ_* remote
// settings inside apply_env_overrides.
void apply_environment(RunConfig& config) {
    if (const char* backend = std::getenv("AQ_BACKEND")) config.backend = backend;
    if (const char* tau = std::getenv("AQ_TAU")) {
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(tau, tau + std::string_view(tau).size(), value);
        if (ec != std::errc() || *ptr != '\0')
            throw aq::ConfigError("AQ_TAU is not a number: " + std::string(tau));
        config.tau = value;
    }
    aq::apply_env_overrides(config.remote);
}

void validate(const RunConfig& config) {
    if (config.backend != "rule" && config.backend != "remote")
        throw aq::ConfigError("unknown backend: " + config.backend);
    if (config.tau && *config.tau <= 0.0)
        throw aq::ConfigError("tau must be positive");
    if (config.backend == "remote" && config.remote.endpoint.empty())
        throw aq::ConfigError("remote backend needs an endpoint (config file or AQ_ENDPOINT)");
}

struct Backends {
    std::unique_ptr<aq::Planner> planner;
    std::unique_ptr<aq::Generator> generator;
};

Backends make_backends(RunConfig config) {
    config.remote.trace = config.remote.trace || config.trace;
    Backends backends;
    if (config.backend == "remote") {
        backends.planner = std::make_unique<aq::RemoteLLMPlanner>(config.remote);
        backends.generator = std::make_unique<aq::RemoteLLMGenerator>(config.remote);
    } else {
        backends.planner = std::make_unique<aq::RuleTemplatePlanner>();
        backends.generator = std::make_unique<aq::ExtractiveGenerator>();
    }
    return backends;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream output(path, std::ios::binary | std::ios::trunc);
    if (!output) throw aq::IngestError("cannot write " + path.string());
    output << content;
}

int cmd_ingest(const fs::path& manifest_path, const fs::path& out_dir) {
    const auto manifest = aq::load_manifest(manifest_path);
    const fs::path base_dir = manifest_path.parent_path();
    for (const auto& entry : manifest) {
        std::vector<std::string> warnings;
        const aq::RecordingDatabase db = aq::build_database(entry, base_dir, &warnings);
        for (const std::string& warning : warnings)
            std::cerr << entry.recording_id << ": " << warning << "\n";
        const fs::path db_dir = out_dir / entry.recording_id;
        fs::create_directories(db_dir);
        aq::save_database(db, db_dir);
        std::cout << entry.recording_id << ": "
                  << db.records(aq::StreamKind::transcript).size() << " transcript, "
                  << db.records(aq::StreamKind::speaker).size() << " speaker, "
                  << db.records(aq::StreamKind::emotion).size() << " emotion, "
                  << db.records(aq::StreamKind::sound_event).size() << " event records -> "
                  << db_dir.string() << "\n";
    }
    return kExitOk;
}

int cmd_query(const fs::path& db_dir, const std::string& question, const RunConfig& config,
              bool emit_sql_only) {
    const aq::RecordingDatabase db = aq::load_database(db_dir);
    aq::QueryRequest request{question, db.recording_id(), aq::db_metadata_from(db)};
    Backends backends = make_backends(config);

    if (emit_sql_only) {
        aq::RetrievalPlan plan = backends.planner->plan(request);
        aq::validate_plan(plan);
        plan = aq::canonicalize(std::move(plan));
        if (config.tau) plan.fusion.tau = *config.tau;
        std::cout << aq::emit_sql(aq::compile(plan));
        return kExitOk;
    }

    aq::PipelineOptions options;
    options.tau_override = config.tau;
    const aq::PipelineResult result =
        aq::run_pipeline(request, db, *backends.planner, *backends.generator, options);

    std::cout << "plan: " << result.trace.plan_json << "\n";
    if (!result.trace.sql.empty()) std::cout << "sql:\n" << result.trace.sql;
    if (result.failed_stage) {
        std::cerr << "stage " << aq::stage_name(*result.failed_stage)
                  << " failed: " << result.error << "\n";
        return kExitStage;
    }
    std::cout << "rows: " << result.trace.row_count << "\n";
    std::cout << "context_size: " << result.trace.context_size << "\n";
    std::cout << "answer: " << result.answer->raw << "\n";
    if (!result.answer->ok()) {
        std::cerr << "answer violates the schema: " << *result.answer->parse_failure << "\n";
        return kExitStage;
    }
    return kExitOk;
}

int cmd_genbench(const fs::path& out_dir, int minutes, const std::string& tasks_csv,
                 std::uint64_t seed, int recordings) {
    aq::BenchmarkSpec spec;
    spec.duration_minutes = minutes;
    spec.seed = seed;
    spec.recordings = recordings;
    std::stringstream stream(tasks_csv);
    std::string name;
    while (std::getline(stream, name, ',')) {
        if (name.empty()) continue;
        const auto task = aq::parse_task(name);
        if (!task) throw aq::IngestError("unknown task: " + name);
        spec.tasks.push_back(*task);
    }

    fs::create_directories(out_dir);
    const aq::GeneratedBenchmark bench = aq::generate_benchmark(spec, out_dir);
    std::cout << bench.manifest.size() << " recordings, " << bench.instances.size()
              << " instances -> " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_eval(const fs::path& corpus_dir, const fs::path& instances_path, const fs::path& out_dir,
             const RunConfig& config, int jobs) {
    const auto manifest = aq::load_manifest(corpus_dir / "manifest.json");
    const auto databases = aq::build_databases(manifest, corpus_dir);
    const auto instances = aq::load_instances(instances_path);
    Backends backends = make_backends(config);

    aq::EvalOptions options;
    options.jobs = jobs;
    options.pipeline.tau_override = config.tau;
    const aq::EvalRun eval =
        aq::run_eval(instances, databases, *backends.planner, *backends.generator, options);

    fs::create_directories(out_dir);
    write_text_file(out_dir / "report.json", aq::report_to_json(eval.report).dump(2) + "\n");
    const std::string text = aq::report_to_text(eval.report);
    write_text_file(out_dir / "report.txt", text);
    write_text_file(out_dir / "runs.jsonl", aq::runs_to_jsonl(eval.runs));
    std::cout << text;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"question answering over time-aligned audio metadata streams"};
    app.require_subcommand(1);

    RunConfig config;
    std::string config_path;
    std::string backend_flag;
    double tau_flag = 0.0;
    std::uint64_t seed_flag = 0;

    const auto add_config_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--backend", backend_flag, "planner/generator backend: rule|remote");
        cmd->add_option("--tau", tau_flag, "fusion tolerance override, seconds");
        cmd->add_flag("--trace", config.trace, "log remote request/response bodies");
    };

    auto* ingest = app.add_subcommand("ingest", "build databases from a manifest");
    fs::path ingest_manifest, ingest_out = "db";
    ingest->add_option("--manifest", ingest_manifest, "manifest JSON path")->required();
    ingest->add_option("--out", ingest_out, "output directory");

    auto* query = app.add_subcommand("query", "answer one question against a database");
    fs::path query_db;
    std::string query_question;
    bool emit_sql_only = false;
    query->add_option("--db", query_db, "ingested database directory")->required();
    query->add_option("--question", query_question, "question text")->required();
    query->add_flag("--emit-sql-only", emit_sql_only, "print the compiled SQL and stop");
    add_config_flags(query);

    auto* genbench = app.add_subcommand("genbench", "synthesize a benchmark corpus");
    fs::path genbench_out = "bench";
    int genbench_minutes = 10;
    int genbench_recordings = 1;
    std::string genbench_tasks;
    genbench->add_option("--out", genbench_out, "output directory");
    genbench->add_option("--minutes", genbench_minutes, "recording length in minutes");
    genbench->add_option("--tasks", genbench_tasks, "comma-separated task subset");
    genbench->add_option("--recordings", genbench_recordings, "number of recordings");
    genbench->add_option("--seed", seed_flag, "generation seed");

    auto* eval = app.add_subcommand("eval", "run and score a benchmark");
    fs::path eval_corpus, eval_instances, eval_out = "eval-out";
    int eval_jobs = 1;
    eval->add_option("--corpus", eval_corpus, "benchmark corpus directory")->required();
    eval->add_option("--instances", eval_instances, "instances JSONL path");
    eval->add_option("--out", eval_out, "report output directory");
    eval->add_option("--jobs", eval_jobs, "parallel pipeline runs");
    add_config_flags(eval);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        // Precedence: config file, then flags the user passed, then environment.
        if (!config_path.empty()) load_config_file(config_path, config);
        for (CLI::App* cmd : {query, eval}) {
            if (cmd->count("--backend")) config.backend = backend_flag;
            if (cmd->count("--tau")) config.tau = tau_flag;
        }
        if (genbench->count("--seed")) config.seed = seed_flag;
        apply_environment(config);
        validate(config);

        if (*ingest) return cmd_ingest(ingest_manifest, ingest_out);
        if (*query) return cmd_query(query_db, query_question, config, emit_sql_only);
        if (*genbench)
            return cmd_genbench(genbench_out, genbench_minutes, genbench_tasks, config.seed,
                                genbench_recordings);
        if (*eval) return cmd_eval(eval_corpus, eval_instances, eval_out, config, eval_jobs);
        return kExitInput;
    } catch (const aq::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const aq::RemoteError& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStage;
    } catch (const aq::ValidationError& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStage;
    } catch (const aq::CompileError& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStage;
    } catch (const aq::ExecError& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}
