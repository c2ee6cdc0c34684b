// SPDX-License-Identifier: Apache-2.0

#include "serp/metrics.hpp"
#include "serp/orchestrator.hpp"
#include "serp/param_memory.hpp"
#include "serp/plot.hpp"
#include "serp/report.hpp"
#include "serp/scenario_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace serp;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kRunError = 1;
constexpr int kConfigError = 2;

struct ConfigError : Error {
    using Error::Error;
};

fs::path fixtures_dir()
{
    if (const char* env = std::getenv("SERP_FIXTURES")) return env;
#ifdef SERP_DEFAULT_FIXTURES
    return SERP_DEFAULT_FIXTURES;
#else
    return "fixtures";
#endif
}

/// A path, or a bare fixture name such as "partial_block".
fs::path scenario_path(const std::string& arg)
{
    const fs::path p(arg);
    if (fs::exists(p)) return p;
    const fs::path named = fixtures_dir() / "scenarios" / (arg + ".json");
    if (p.extension().empty() && fs::exists(named)) return named;
    throw ConfigError("scenario not found: " + arg);
}

ScenarioSpec load_checked(const std::string& arg)
{
    ScenarioSpec spec;
    try {
        spec = load_scenario(scenario_path(arg));
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    const auto issues = lint_scenario(spec);
    if (!issues.empty()) {
        std::string msg = "invalid scenario " + arg + ":";
        for (const auto& i : issues) msg += "\n  " + i;
        throw ConfigError(msg);
    }
    return spec;
}

PlannerParams parse_params(const std::string& text)
{
    PlannerParams p;
    char c1 = 0, c2 = 0;
    std::istringstream in(text);
    if (!(in >> p.q_s >> c1 >> p.p_v >> c2 >> p.eta) || c1 != ',' || c2 != ',' || !p.valid())
        throw ConfigError("bad parameter triple '" + text + "' (want q_s,p_v,eta)");
    return p;
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

void check_backend(const std::string& backend)
{
    if (parse_backend(backend) == Backend::http && HttpConfig::from_env().endpoint.empty())
        throw ConfigError("--backend http needs SERP_ENDPOINT");
}

EpisodeReport run_one(const ScenarioSpec& spec, const RunOptions& opts)
{
    ModelClients clients = scenario_clients(spec, opts.backend);
    return run_serp(spec, clients, opts);
}

struct RunArgs {
    std::string scenario;
    std::string backend = "mock";
    unsigned seed = 0;
    std::string out = "out";
    std::string mode;
    std::string init;
    bool remove_best = false;
};

int cmd_run(const RunArgs& a)
{
    const ScenarioSpec spec = load_checked(a.scenario);
    check_backend(a.backend);
    RunOptions opts;
    opts.backend = a.backend;
    opts.seed = a.seed;
    if (!a.mode.empty()) opts.mode = parse_mode(a.mode);
    if (!a.init.empty()) opts.initial_params = parse_params(a.init);
    opts.remove_best_record = a.remove_best;
    const EpisodeReport rep = run_one(spec, opts);
    const fs::path path = fs::path(a.out) / (spec.scenario.id + ".report.json");
    write_text(path, report_to_json_text(rep));
    std::cout << spec.scenario.id << ": " << rep.outcome << (rep.reason.empty() ? "" : " (" + rep.reason + ")")
              << ", epochs " << rep.epochs_total << ", global passes " << rep.global_passes.size() << ", report "
              << path.string() << "\n";
    return kOk;
}

struct BenchArgs {
    std::vector<std::string> scenarios;
    std::vector<std::string> modes{"ilad", "ad_only", "il_only"};
    std::vector<std::string> bands{"0-30", "30-60", "60-90"};
    int trials = 5;
    unsigned seed = 0;
    std::string backend = "mock";
    std::string out = "out";
    std::string reference;
    int jobs = 1;
};

std::pair<double, double> parse_band(const std::string& b)
{
    const auto dash = b.find('-');
    if (dash == std::string::npos) throw ConfigError("bad band '" + b + "' (want lo-hi in percent)");
    try {
        const double lo = std::stod(b.substr(0, dash)) / 100.0;
        const double hi = std::stod(b.substr(dash + 1)) / 100.0;
        if (!(lo >= 0.0 && hi > lo && hi < 1.0)) throw ConfigError("bad band '" + b + "'");
        return {lo, hi};
    } catch (const std::logic_error&) {
        throw ConfigError("bad band '" + b + "'");
    }
}

/// Parameters whose relative deviation from `ref` lies in [lo, hi) in every
/// coordinate, with independent random signs.
PlannerParams deviate(const PlannerParams& ref, double lo, double hi, std::mt19937& rng)
{
    std::uniform_real_distribution<double> mag(lo, hi);
    std::bernoulli_distribution sign(0.5);
    auto one = [&](double x) { return x * (1.0 + (sign(rng) ? 1.0 : -1.0) * mag(rng)); };
    PlannerParams p;
    p.q_s = one(ref.q_s);
    p.p_v = one(ref.p_v);
    p.eta = one(ref.eta);
    return p;
}

PlannerParams reference_params(const ScenarioSpec& spec)
{
    const Scenario& sc = spec.scenario;
    if (sc.memory_file.empty()) return spec.default_params;
    HashEmbedder embedder;
    ParamMemory memory = ParamMemory::load(spec.resolve(sc.memory_file), &embedder);
    try {
        return memory.retrieve_initial(sc.memory_query, 1, embedder).first;
    } catch (const Error&) {
        return spec.default_params;
    }
}

int cmd_bench(const BenchArgs& a)
{
    if (a.trials < 1) throw ConfigError("--trials must be positive");
    check_backend(a.backend);
    struct Job {
        std::string scenario, band, mode;
        int trial;
        RunOptions opts;
        const ScenarioSpec* spec;
    };
    std::vector<ScenarioSpec> specs;
    for (const auto& s : a.scenarios) specs.push_back(load_checked(s));
    for (const auto& m : a.modes) (void)parse_mode(m);

    std::vector<Job> jobs;
    for (std::size_t si = 0; si < specs.size(); ++si) {
        const PlannerParams ref = a.reference.empty() ? reference_params(specs[si]) : parse_params(a.reference);
        for (const auto& band : a.bands) {
            const auto [lo, hi] = parse_band(band);
            for (int t = 0; t < a.trials; ++t) {
                // One draw per (scenario, band, trial), shared by every mode.
                std::mt19937 rng(a.seed * 1000003u + static_cast<unsigned>(si * 7919 + t) +
                                 static_cast<unsigned>(std::hash<std::string>{}(band) % 65521));
                const PlannerParams init = deviate(ref, lo, hi, rng);
                for (const auto& m : a.modes) {
                    Job j{specs[si].scenario.id, band, m, t, {}, &specs[si]};
                    j.opts.backend = a.backend;
                    j.opts.seed = a.seed;
                    j.opts.mode = parse_mode(m);
                    j.opts.initial_params = init;
                    jobs.push_back(j);
                }
            }
        }
    }

    std::vector<EpisodeReport> reports(jobs.size());
    const int width = std::max(1, a.jobs);
    for (std::size_t start = 0; start < jobs.size(); start += static_cast<std::size_t>(width)) {
        std::vector<std::future<EpisodeReport>> batch;
        const std::size_t end = std::min(jobs.size(), start + static_cast<std::size_t>(width));
        for (std::size_t i = start; i < end; ++i)
            batch.push_back(std::async(std::launch::async, [&, i] { return run_one(*jobs[i].spec, jobs[i].opts); }));
        for (std::size_t i = start; i < end; ++i) reports[i] = batch[i - start].get();
    }

    std::ostringstream trials;
    trials << "scenario,band,mode,trial,q_s,p_v,eta,outcome,spl_contribution,epochs,tokens_sent,rgtr,audit\n";
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& r = reports[i];
        const auto audit = audit_report(r);
        trials << jobs[i].scenario << "," << jobs[i].band << "," << jobs[i].mode << "," << jobs[i].trial << ","
               << format_fixed(r.initial_params.q_s, 4) << "," << format_fixed(r.initial_params.p_v, 4) << ","
               << format_fixed(r.initial_params.eta, 4) << "," << r.outcome << ","
               << format_fixed(spl_term(path_outcome(r)), 6) << "," << maec_term(trial_epochs(r)) << ","
               << r.tokens.tokens_sent << "," << format_fixed(r.rgtr, 4) << "," << (audit.matches ? "ok" : "mismatch")
               << "\n";
    }
    std::ostringstream summary;
    summary << "scenario,band,mode,trials,SR,MAEC,SPL,RGTR\n";
    for (const auto& spec : specs)
        for (const auto& band : a.bands)
            for (const auto& m : a.modes) {
                std::vector<EpisodeReport> group;
                for (std::size_t i = 0; i < jobs.size(); ++i)
                    if (jobs[i].scenario == spec.scenario.id && jobs[i].band == band && jobs[i].mode == m)
                        group.push_back(reports[i]);
                const MetricsSummary s = summarize(group);
                summary << spec.scenario.id << "," << band << "," << m << "," << group.size() << ","
                        << format_fixed(s.sr, 2) << "," << format_fixed(s.maec, 2) << "," << format_fixed(s.spl, 2)
                        << "," << format_fixed(s.rgtr, 2) << "\n";
            }
    write_text(fs::path(a.out) / "bench_trials.csv", trials.str());
    write_text(fs::path(a.out) / "bench_summary.csv", summary.str());
    std::cout << summary.str();
    return kOk;
}

int cmd_memorize(const std::string& script, const std::string& out, int dimension)
{
    std::ifstream in(script, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + script);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(script + ": " + e.what());
    }
    HashEmbedder embedder(dimension);
    ParamMemory memory(dimension);
    try {
        for (const auto& r : j.at("records")) {
            const auto& pose = r.at("pose");
            const auto& p = r.at("params");
            memory.memorize(r.value("time", 0.0),
                            {pose.at(0).get<double>(), pose.at(1).get<double>(), pose.size() > 2 ? pose.at(2).get<double>() : 0.0},
                            r.at("text").get<std::string>(),
                            {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()}, embedder);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(script + ": " + e.what());
    }
    memory.save(out);
    std::cout << "memorized " << memory.size() << " records into " << out << "\n";
    return kOk;
}

int cmd_plot(const std::string& report, const std::string& out)
{
    EpisodeReport r;
    try {
        r = load_report(report);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    for (const auto& p : write_plots(r, out)) std::cout << p.string() << "\n";
    return kOk;
}

int cmd_validate(const std::string& scenario, const std::string& graph)
{
    int bad = 0;
    if (!scenario.empty()) {
        try {
            load_checked(scenario);
            std::cout << scenario << ": ok\n";
        } catch (const ConfigError& e) {
            std::cerr << e.what() << "\n";
            ++bad;
        }
    }
    if (!graph.empty()) {
        try {
            const SceneGraph g = load_graph(graph, nullptr);
            HashEmbedder embedder;
            SceneGraph full = g;
            embed_missing(full, embedder);
            const auto v = validate(full);
            for (const auto& x : v) std::cerr << graph << ": " << x.rule << " " << x.node << " " << x.detail << "\n";
            if (v.empty()) std::cout << graph << ": ok (" << g.size() << " nodes, " << token_count(g) << " tokens)\n";
            bad += v.empty() ? 0 : 1;
        } catch (const Error& e) {
            std::cerr << e.what() << "\n";
            ++bad;
        }
    }
    return bad ? kConfigError : kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"serp: self-evolving robot planning on a simulated 2D world"};
    app.require_subcommand(1);

    RunArgs run;
    auto* r = app.add_subcommand("run", "run one scenario and write its report");
    r->add_option("--scenario,-s", run.scenario, "scenario file or fixture name")->required();
    r->add_option("--backend", run.backend, "mock | http")->check(CLI::IsMember({"mock", "http"}));
    r->add_option("--seed", run.seed);
    r->add_option("--out,-o", run.out, "output directory");
    r->add_option("--mode", run.mode, "ilad | ad_only | il_only")->check(CLI::IsMember({"ilad", "ad_only", "il_only"}));
    r->add_option("--init", run.init, "initial parameters q_s,p_v,eta (skips retrieval)");
    r->add_flag("--remove-best", run.remove_best, "drop the best matching memory record first");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "parameter-deviation bands x evolution modes");
    b->add_option("--scenario,-s", bench.scenarios)->required();
    b->add_option("--modes", bench.modes)->delimiter(',');
    b->add_option("--bands", bench.bands, "percent ranges like 0-30")->delimiter(',');
    b->add_option("--trials", bench.trials);
    b->add_option("--seed", bench.seed);
    b->add_option("--backend", bench.backend)->check(CLI::IsMember({"mock", "http"}));
    b->add_option("--out,-o", bench.out);
    b->add_option("--reference", bench.reference, "reference parameters q_s,p_v,eta");
    b->add_option("--jobs,-j", bench.jobs);

    std::string mem_script, mem_out = "memory.json";
    int mem_dim = 64;
    auto* m = app.add_subcommand("memorize", "build a parameter memory from a record script");
    m->add_option("--script", mem_script)->required();
    m->add_option("--out,-o", mem_out);
    m->add_option("--dimension", mem_dim);

    std::string plot_report, plot_out = "plots";
    auto* p = app.add_subcommand("plot", "trajectory, loss and parameter SVGs from a report");
    p->add_option("--report", plot_report)->required();
    p->add_option("--out,-o", plot_out);

    std::string val_scenario, val_graph;
    auto* v = app.add_subcommand("validate", "lint a scenario or a graph file");
    v->add_option("--scenario,-s", val_scenario);
    v->add_option("--graph,-g", val_graph);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    try {
        if (*r) return cmd_run(run);
        if (*b) return cmd_bench(bench);
        if (*m) return cmd_memorize(mem_script, mem_out, mem_dim);
        if (*p) return cmd_plot(plot_report, plot_out);
        if (*v) {
            if (val_scenario.empty() && val_graph.empty()) throw ConfigError("validate needs --scenario or --graph");
            return cmd_validate(val_scenario, val_graph);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRunError;
    }
    return kOk;
}
