// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace serp {

struct EpisodeReport;

struct PathOutcome {
    bool success = false;
    double shortest = 0.0;   // l_i > 0
    double taken = 0.0;      // p_i
};

/// 100 * mean of S_i * l_i / max(p_i, l_i).
double compute_spl(std::span<const PathOutcome> episodes);
double compute_sr(std::span<const PathOutcome> episodes);
/// Contribution of one episode to SPL, in [0, 1].
double spl_term(const PathOutcome& episode);

/// 100 * (1 - graph_tokens / baseline_tokens), clamped to [0, 100]. A zero
/// baseline means no graph was ever needed and yields 0.
double compute_rgtr(std::size_t graph_tokens, std::size_t baseline_tokens);

struct TrialEpochs {
    int epochs = 0;              // ILAD epochs consumed
    bool local_failure = false;  // a local phase ran out of budget
    int budget = 20;             // Y
};

/// Epochs a trial contributes: a local failure counts at least Y.
int maec_term(const TrialEpochs& trial);
double compute_maec(std::span<const TrialEpochs> trials);

struct MetricsSummary {
    double spl = 0.0;
    double sr = 0.0;
    double rgtr = 0.0;
    double maec = 0.0;
    std::size_t episodes = 0;
};

PathOutcome path_outcome(const EpisodeReport& report);
TrialEpochs trial_epochs(const EpisodeReport& report);
/// RGTR over all episodes pools the token counts before taking the ratio.
MetricsSummary summarize(std::span<const EpisodeReport> reports);

/// Independent recomputation from the raw fields of a report: graph tokens
/// from the logged requests, path length from the trace, epochs from the
/// evolution rows.
struct ReportAudit {
    std::size_t graph_tokens = 0;
    int graph_calls = 0;
    double rgtr = 0.0;
    double path_length = 0.0;
    int epochs = 0;
    bool matches = false;
    std::vector<std::string> mismatches;
};

ReportAudit audit_report(const EpisodeReport& report);

} // namespace serp
