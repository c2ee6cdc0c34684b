// SPDX-License-Identifier: Apache-2.0

#include "serp/ase_engine.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace serp {

bool LossWeights::valid() const
{
    const double w[] = {alpha, beta, gamma, omega};
    bool any = false;
    for (double x : w) {
        if (!std::isfinite(x) || x < 0.0) return false;
        any = any || x > 0.0;
    }
    return any;
}

double evolution_loss(const PlannerParams&, const LossWeights& weights, const Episode& episode, const RobotState& goal)
{
    if (episode.states.empty()) return 0.0;
    if (episode.reference.size() != episode.states.size() || episode.controls.size() != episode.states.size() ||
        episode.clearances.size() != episode.states.size())
        throw Error("episode arrays differ in length");
    double total = 0.0;
    for (std::size_t h = 0; h < episode.states.size(); ++h) {
        const Vec2 e = episode.states[h].position() - episode.reference[h].position();
        const double ev = episode.controls[h].v - episode.v_ref;
        total += weights.alpha * dot(e, e) + weights.beta * ev * ev - weights.gamma * std::abs(episode.clearances[h]);
    }
    total += weights.omega * distance(episode.states.back().position(), goal.position());
    return total;
}

namespace {

double& component(PlannerParams& p, int i)
{
    return i == 0 ? p.q_s : (i == 1 ? p.p_v : p.eta);
}

double probe_loss(const PlannerParams& p, const LossWeights& w, const EpisodeClosure& closure, const RobotState& goal)
{
    const double l = evolution_loss(p, w, closure(p), goal);
    if (!std::isfinite(l)) throw Error("nondifferentiable probe");
    return l;
}

} // namespace

ParamGradient grad_params(const PlannerParams& params, const LossWeights& weights, const EpisodeClosure& closure,
                          const RobotState& goal, double step_scale)
{
    ParamGradient g{};
    for (int i = 0; i < 3; ++i) {
        PlannerParams hi = params;
        PlannerParams lo = params;
        const double x = component(hi, i);
        const double h = std::max(1e-3, 1e-3 * std::abs(x)) * step_scale;
        component(hi, i) = x + h;
        if (x - h >= 0.0) {
            component(lo, i) = x - h;
            g[static_cast<std::size_t>(i)] =
                (probe_loss(hi, weights, closure, goal) - probe_loss(lo, weights, closure, goal)) / (2.0 * h);
        } else {
            g[static_cast<std::size_t>(i)] =
                (probe_loss(hi, weights, closure, goal) - probe_loss(params, weights, closure, goal)) / h;
        }
    }
    return g;
}

EvolutionState ad_step(EvolutionState state, const ParamGradient& gradient, double epsilon, const Evaluation& at,
                       double clip)
{
    EpochRecord rec{state.epoch, "AD", state.params, state.weights, at.loss, at.outcome, gradient, ""};
    for (int i = 0; i < 3; ++i) {
        const double g = std::clamp(gradient[static_cast<std::size_t>(i)], -clip, clip);
        double& x = component(state.params, i);
        x = std::max(0.0, x - epsilon * g);
    }
    state.history.push_back(rec);
    ++state.epoch;
    return state;
}

namespace {

std::string fmt(double v) { return format_fixed(v, 4); }

std::string params_text(const PlannerParams& p, const LossWeights& w)
{
    return "q_s=" + fmt(p.q_s) + " p_v=" + fmt(p.p_v) + " eta=" + fmt(p.eta) + " alpha=" + fmt(w.alpha) +
           " beta=" + fmt(w.beta) + " gamma=" + fmt(w.gamma) + " omega=" + fmt(w.omega);
}

std::string canonical_key(std::string k)
{
    std::string out;
    for (char c : k) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || c == '_') out.push_back(static_cast<char>(std::tolower(u)));
    }
    if (out == "qs" || out == "q") return "q_s";
    if (out == "pv" || out == "p") return "p_v";
    return out;
}

} // namespace

std::string advisor_request(const EvolutionState& state, const FailureContext& context, const Evaluation& at)
{
    std::ostringstream out;
    out << "FAILURE_CONTEXT\n";
    out << "failure: " << context.failure << "\n";
    out << "stuck_pose: " << fmt(context.pose.x) << " " << fmt(context.pose.y) << " " << fmt(context.pose.theta) << "\n";
    out << "min_distance: " << fmt(context.min_distance) << "\n";
    out << "epoch: " << state.epoch << "\n";
    out << "outcome: " << at.outcome << "\n";
    out << "loss: " << fmt(at.loss) << "\n";
    out << "loss_trace:";
    for (const auto& r : state.history) out << " " << fmt(r.loss);
    out << " " << fmt(at.loss) << "\n";
    out << "current: " << params_text(state.params, state.weights) << "\n";
    out << "HISTORY\n";
    for (const auto& r : state.history)
        out << "epoch=" << r.epoch << " mode=" << r.mode << " " << params_text(r.params, r.weights)
            << " loss=" << fmt(r.loss) << " outcome=" << r.outcome << "\n";
    out << "RESPONSE\n";
    out << "q_s=<value> p_v=<value> eta=<value> alpha=<value> beta=<value> gamma=<value> omega=<value>\n";
    return out.str();
}

AdviceParse parse_advice(const std::string& text)
{
    AdviceParse out;
    std::string flat = text;
    for (char& c : flat)
        if (c == '\n' || c == '\r' || c == ',' || c == ';' || c == '{' || c == '}' || c == '"') c = ' ';
    // Tokens are either "key=value", "key:value", "key = value" or "key: value".
    std::istringstream in(flat);
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) tokens.push_back(t);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& t = tokens[i];
        const auto sep = t.find_first_of("=:");
        if (sep == std::string::npos) {
            if (i + 2 < tokens.size() && (tokens[i + 1] == "=" || tokens[i + 1] == ":")) {
                pairs.emplace_back(t, tokens[i + 2]);
                i += 2;
            }
            continue;
        }
        std::string key = t.substr(0, sep);
        std::string value = t.substr(sep + 1);
        if (value.empty() && i + 1 < tokens.size()) value = tokens[++i];
        pairs.emplace_back(key, value);
    }
    for (const auto& [raw_key, raw_value] : pairs) {
        const std::string key = canonical_key(raw_key);
        std::optional<double>* slot = nullptr;
        if (key == "q_s") slot = &out.q_s;
        else if (key == "p_v") slot = &out.p_v;
        else if (key == "eta") slot = &out.eta;
        else if (key == "alpha") slot = &out.alpha;
        else if (key == "beta") slot = &out.beta;
        else if (key == "gamma") slot = &out.gamma;
        else if (key == "omega") slot = &out.omega;
        if (!slot) continue;
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(raw_value, &used);
            if (used != raw_value.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            out.warnings.push_back("unparseable value for " + key + ": " + raw_value);
            continue;
        }
        if (!std::isfinite(v) || v < 0.0 || v > 1e3) {
            out.warnings.push_back("out-of-range value for " + key + ": " + raw_value);
            continue;
        }
        *slot = v;
    }
    return out;
}

EvolutionState il_step(EvolutionState state, AdvisorClient& advisor, const FailureContext& context,
                       const Evaluation& at, int sequence_index)
{
    ModelRequest req{RequestKind::il_advise, advisor_request(state, context, at), sequence_index};
    std::string reply;
    try {
        reply = advisor.advise_params(req);
    } catch (const std::exception& e) {
        const std::string what = e.what();
        if (what.rfind("advisor unavailable", 0) == 0) throw Error(what);
        throw Error("advisor unavailable: " + what);
    }

    const AdviceParse advice = parse_advice(reply);
    EpochRecord rec{state.epoch, "IL", state.params, state.weights, at.loss, at.outcome, {}, ""};
    std::string note;
    for (const auto& w : advice.warnings) note += (note.empty() ? "" : "; ") + w;
    const bool any = advice.q_s || advice.p_v || advice.eta || advice.alpha || advice.beta || advice.gamma || advice.omega;
    if (!any) {
        note += (note.empty() ? "" : "; ") + std::string("advisor reply unparseable, parameters kept");
    } else {
        if (advice.q_s) state.params.q_s = *advice.q_s;
        if (advice.p_v) state.params.p_v = *advice.p_v;
        if (advice.eta) state.params.eta = *advice.eta;
        LossWeights w = state.weights;
        if (advice.alpha) w.alpha = *advice.alpha;
        if (advice.beta) w.beta = *advice.beta;
        if (advice.gamma) w.gamma = *advice.gamma;
        if (advice.omega) w.omega = *advice.omega;
        if (w.valid()) state.weights = w;
        else note += (note.empty() ? "" : "; ") + std::string("advised weights all zero, weights kept");
    }
    rec.note = note;
    state.history.push_back(rec);
    ++state.epoch;
    return state;
}

std::string to_string(EvolutionOutcome::Status status)
{
    return status == EvolutionOutcome::Status::success ? "success" : "local_failure";
}

EvolutionOutcome run_ilad(const PlannerParams& init, const LossWeights& weights, const std::set<int>& X, int Y,
                          const EpisodeClosure& closure, const RobotState& goal, AdvisorClient* advisor,
                          const FailureContext& context, const EvolutionOptions& options, int first_sequence_index)
{
    if (!init.valid()) throw Error("invalid planner params");
    if (!weights.valid()) throw Error("invalid loss weights");
    EvolutionState state;
    state.params = init;
    state.weights = weights;
    state.schedule = X;
    state.budget = Y;
    return run_ilad(std::move(state), closure, goal, advisor, context, options, first_sequence_index);
}

EvolutionOutcome run_ilad(EvolutionState state, const EpisodeClosure& closure, const RobotState& goal,
                          AdvisorClient* advisor, const FailureContext& context, const EvolutionOptions& options,
                          int first_sequence_index)
{
    const int Y = state.budget;
    if (Y < 1) throw Error("budget Y must be >= 1");
    if (state.epoch < 0 || state.epoch > Y) throw Error("epoch outside the budget");
    if (!state.params.valid()) throw Error("invalid planner params");
    if (!state.weights.valid()) throw Error("invalid loss weights");

    EvolutionOutcome out;
    out.start_epoch = state.epoch;
    int il_calls = 0;
    auto finish = [&](EvolutionOutcome::Status st) {
        out.status = st;
        out.final_params = state.params;
        out.final_weights = state.weights;
        out.advisor_requests = il_calls;
        out.trace = state.history;
        out.state = state;
        return out;
    };

    try {
        for (int k = state.epoch; k < Y; ++k) {
            Episode ep = closure(state.params);
            const double loss = evolution_loss(state.params, state.weights, ep, goal);
            out.loss_trace.push_back(loss);
            const Evaluation at{loss, ep.outcome};
            const bool ok = ep.success;
            out.last_episode = std::move(ep);
            if (ok) {
                out.epochs_used = k;
                return finish(EvolutionOutcome::Status::success);
            }

            FailureContext ctx = context;
            ctx.loss_trace = out.loss_trace;
            if (state.schedule.contains(k) && advisor) {
                try {
                    state = il_step(state, *advisor, ctx, at, first_sequence_index + il_calls);
                    ++il_calls;
                    continue;
                } catch (const Error& e) {
                    const std::string what = e.what();
                    if (what.rfind("advisor unavailable", 0) != 0) throw;
                    ++il_calls;
                    const ParamGradient g = grad_params(state.params, state.weights, closure, goal, options.fd_scale);
                    state = ad_step(std::move(state), g, options.epsilon, at, options.clip);
                    state.history.back().note = what + "; epoch run as AD";
                    continue;
                }
            }
            const ParamGradient g = grad_params(state.params, state.weights, closure, goal, options.fd_scale);
            state = ad_step(std::move(state), g, options.epsilon, at, options.clip);
        }
    } catch (const Error& e) {
        out.reason = e.what();
        out.epochs_used = Y;
        return finish(EvolutionOutcome::Status::local_failure);
    }
    out.epochs_used = Y;
    out.reason = "epoch budget exhausted";
    return finish(EvolutionOutcome::Status::local_failure);
}

Episode episode_from(const SegmentResult& result, const SegmentSpec& spec, const World& world)
{
    Episode ep;
    ep.states = result.rollout.states;
    ep.controls = result.rollout.controls;
    ep.clearances = result.rollout.clearances;
    ep.v_ref = world.v_ref;
    ep.reference.reserve(ep.states.size());
    for (std::size_t h = 0; h < ep.states.size(); ++h)
        ep.reference.push_back(spec.path.sample(spec.start_progress + static_cast<double>(h) * world.v_ref * world.dt));
    ep.success = result.status == SegmentStatus::reached;
    ep.outcome = to_string(result.status);
    return ep;
}

EpisodeClosure segment_closure(const World& world, const ControllerConfig& config, const SegmentSpec& spec)
{
    SegmentSpec s = spec;
    s.stop_on_failure = false;
    return [world, config, s](const PlannerParams& p) { return episode_from(run_segment(world, p, config, s), s, world); };
}

} // namespace serp
