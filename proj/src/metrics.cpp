// SPDX-License-Identifier: Apache-2.0

#include "serp/metrics.hpp"

#include "serp/orchestrator.hpp"

#include <algorithm>

namespace serp {

double spl_term(const PathOutcome& e)
{
    if (!(e.shortest > 0.0)) throw Error("shortest path length must be positive");
    if (!e.success) return 0.0;
    return e.shortest / std::max(e.taken, e.shortest);
}

double compute_spl(std::span<const PathOutcome> episodes)
{
    if (episodes.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& e : episodes) sum += spl_term(e);
    return 100.0 * sum / static_cast<double>(episodes.size());
}

double compute_sr(std::span<const PathOutcome> episodes)
{
    if (episodes.empty()) return 0.0;
    const auto n = std::count_if(episodes.begin(), episodes.end(), [](const PathOutcome& e) { return e.success; });
    return 100.0 * static_cast<double>(n) / static_cast<double>(episodes.size());
}

double compute_rgtr(std::size_t graph_tokens, std::size_t baseline_tokens)
{
    if (baseline_tokens == 0) return 0.0;
    const double r = 100.0 * (1.0 - static_cast<double>(graph_tokens) / static_cast<double>(baseline_tokens));
    return std::clamp(r, 0.0, 100.0);
}

int maec_term(const TrialEpochs& t)
{
    return t.local_failure ? std::max(t.epochs, t.budget) : t.epochs;
}

double compute_maec(std::span<const TrialEpochs> trials)
{
    if (trials.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& t : trials) sum += maec_term(t);
    return sum / static_cast<double>(trials.size());
}

PathOutcome path_outcome(const EpisodeReport& r)
{
    return {r.outcome == "success", r.shortest_path_length, r.path_length};
}

TrialEpochs trial_epochs(const EpisodeReport& r)
{
    TrialEpochs t;
    t.epochs = r.epochs_total;
    t.budget = r.max_local_epochs;
    t.local_failure = std::any_of(r.local_phases.begin(), r.local_phases.end(),
                                  [](const LocalPhase& p) { return p.status != "success"; });
    return t;
}

MetricsSummary summarize(std::span<const EpisodeReport> reports)
{
    MetricsSummary s;
    s.episodes = reports.size();
    std::vector<PathOutcome> paths;
    std::vector<TrialEpochs> trials;
    std::size_t graph = 0;
    std::size_t base = 0;
    for (const auto& r : reports) {
        paths.push_back(path_outcome(r));
        trials.push_back(trial_epochs(r));
        graph += r.tokens.graph_tokens_sent;
        base += static_cast<std::size_t>(r.tokens.graph_calls) * r.tokens.full_graph_tokens;
    }
    s.spl = compute_spl(paths);
    s.sr = compute_sr(paths);
    s.maec = compute_maec(trials);
    s.rgtr = compute_rgtr(graph, base);
    return s;
}

ReportAudit audit_report(const EpisodeReport& r)
{
    ReportAudit a;
    for (const auto& ex : r.exchanges) {
        const auto blocks = graph_blocks(ex.request);
        for (const auto& b : blocks) a.graph_tokens += count_tokens(b);
        if (!blocks.empty()) ++a.graph_calls;
    }
    a.rgtr = compute_rgtr(a.graph_tokens, static_cast<std::size_t>(a.graph_calls) * r.tokens.full_graph_tokens);
    a.path_length = trace_length(r.trace);
    for (const auto& p : r.local_phases) a.epochs += p.end_epoch - p.start_epoch;

    auto check = [&](bool ok, const std::string& what) {
        if (!ok) a.mismatches.push_back(what);
    };
    check(a.graph_tokens == r.tokens.graph_tokens_sent, "graph tokens");
    check(a.graph_calls == r.tokens.graph_calls, "graph calls");
    check(a.rgtr == r.rgtr, "rgtr");
    check(a.path_length == r.path_length, "path length");
    check(a.epochs == r.epochs_total, "epochs");
    check(static_cast<int>(r.evolution.size()) == a.epochs, "evolution rows");
    a.matches = a.mismatches.empty();
    return a;
}

} // namespace serp
