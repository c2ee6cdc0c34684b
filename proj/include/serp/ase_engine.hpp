// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/execution.hpp"
#include "serp/model_clients.hpp"

#include <array>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace serp {

struct LossWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
    double omega = 1.0;

    bool valid() const;
    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// A closed-loop rollout over the stuck segment together with the reference
/// it was supposed to follow. reference[h] is the time-indexed reference pose
/// for states[h].
struct Episode {
    std::vector<RobotState> states;
    std::vector<ControlInput> controls;
    std::vector<double> clearances;
    std::vector<RobotState> reference;
    double v_ref = 0.0;
    bool success = false;
    std::string outcome;   // reached | collision | stationary | timeout
};

/// Sum over states of alpha*|s-s_ref|^2 + beta*(v-v_ref)^2 - gamma*d, plus
/// omega times the unsquared distance from the final state to `goal`.
/// Positions only; headings do not enter.
double evolution_loss(const PlannerParams& params, const LossWeights& weights, const Episode& episode,
                      const RobotState& goal);

using EpisodeClosure = std::function<Episode(const PlannerParams&)>;
using ParamGradient = std::array<double, 3>;   // d/dq_s, d/dp_v, d/deta

/// Central differences with h = max(1e-3, 1e-3*|x|) times `step_scale`. A
/// parameter closer to zero than h uses a forward difference so that no probe
/// goes negative. Throws Error("nondifferentiable probe") on a non-finite loss.
ParamGradient grad_params(const PlannerParams& params, const LossWeights& weights, const EpisodeClosure& closure,
                          const RobotState& goal, double step_scale = 1.0);

struct EpochRecord {
    int epoch = 0;
    std::string mode;   // AD | IL
    PlannerParams params;
    LossWeights weights;
    double loss = 0.0;
    std::string outcome;
    ParamGradient gradient{};   // AD only
    std::string note;
};

struct EvolutionState {
    int epoch = 0;
    PlannerParams params;
    LossWeights weights;
    std::vector<EpochRecord> history;
    std::set<int> schedule;   // X
    int budget = 20;          // Y
};

/// Result of evaluating the current parameters at one epoch.
struct Evaluation {
    double loss = 0.0;
    std::string outcome;
};

/// x <- max(0, x - epsilon * clip(g)) for each parameter. The history record
/// stores the parameters the evaluation was run with.
EvolutionState ad_step(EvolutionState state, const ParamGradient& gradient, double epsilon, const Evaluation& at,
                       double clip = 10.0);

struct FailureContext {
    std::string failure;
    RobotState pose;
    double min_distance = 0.0;
    std::vector<double> loss_trace;
};

/// FAILURE_CONTEXT and HISTORY sections followed by the current values.
std::string advisor_request(const EvolutionState& state, const FailureContext& context, const Evaluation& at);

struct AdviceParse {
    std::optional<double> q_s, p_v, eta, alpha, beta, gamma, omega;
    std::vector<std::string> warnings;
};

/// Reads a flat key/value record ("key = value" or "key: value", separated by
/// newlines, commas or semicolons). Unknown keys are ignored; non-numeric,
/// negative or absurdly large values are dropped with a warning.
AdviceParse parse_advice(const std::string& text);

/// One advisor reset. Values the advisor omits or gets wrong keep their
/// previous setting. Throws Error("advisor unavailable: ...") when the
/// advisor cannot be reached.
EvolutionState il_step(EvolutionState state, AdvisorClient& advisor, const FailureContext& context,
                       const Evaluation& at, int sequence_index = 0);

struct EvolutionOptions {
    double epsilon = 0.5;
    double clip = 10.0;
    double fd_scale = 1.0;
};

struct EvolutionOutcome {
    enum class Status { success, local_failure };
    Status status = Status::local_failure;
    PlannerParams final_params;
    LossWeights final_weights;
    int epochs_used = 0;
    std::vector<double> loss_trace;
    std::vector<EpochRecord> trace;
    std::string reason;
    Episode last_episode;
    int start_epoch = 0;        // k when this call began
    int advisor_requests = 0;   // advisor calls made, reachable or not
    EvolutionState state;       // state after the last epoch, for resuming
};

std::string to_string(EvolutionOutcome::Status status);

/// Alternates AD and IL epochs on the schedule X within budget Y: epoch k
/// evaluates the current parameters, stops on success, otherwise applies
/// il_step when k is in X and ad_step otherwise. `advisor` may be null, in
/// which case every epoch is AD. An unreachable advisor also degrades that
/// epoch to AD.
EvolutionOutcome run_ilad(const PlannerParams& init, const LossWeights& weights, const std::set<int>& X, int Y,
                          const EpisodeClosure& closure, const RobotState& goal, AdvisorClient* advisor,
                          const FailureContext& context, const EvolutionOptions& options = {},
                          int first_sequence_index = 0);

/// Resumes from `state`: epochs state.epoch..state.budget-1, schedule and
/// budget taken from the state, history extended in place.
EvolutionOutcome run_ilad(EvolutionState state, const EpisodeClosure& closure, const RobotState& goal,
                          AdvisorClient* advisor, const FailureContext& context, const EvolutionOptions& options = {},
                          int first_sequence_index = 0);

/// Closure that re-simulates a stuck segment from its start pose. The
/// reference is time-indexed from the segment's start progress and the
/// predicate is "reached the goal with no collision or stall".
EpisodeClosure segment_closure(const World& world, const ControllerConfig& config, const SegmentSpec& spec);

Episode episode_from(const SegmentResult& result, const SegmentSpec& spec, const World& world);

} // namespace serp
