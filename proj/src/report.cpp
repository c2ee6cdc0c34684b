// SPDX-License-Identifier: Apache-2.0

#include "serp/report.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace serp {

namespace {

using json = nlohmann::json;

json pose(const RobotState& s) { return json::array({s.x, s.y, s.theta}); }
RobotState pose(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
json vec(Vec2 v) { return json::array({v.x, v.y}); }
Vec2 vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json params(const PlannerParams& p) { return {{"q_s", p.q_s}, {"p_v", p.p_v}, {"eta", p.eta}}; }
PlannerParams params(const json& j) { return {j.at("q_s").get<double>(), j.at("p_v").get<double>(), j.at("eta").get<double>()}; }

json weights(const LossWeights& w) { return {{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}, {"omega", w.omega}}; }
LossWeights weights(const json& j)
{
    return {j.at("alpha").get<double>(), j.at("beta").get<double>(), j.at("gamma").get<double>(),
            j.at("omega").get<double>()};
}

json tokens(const TokenLedger& t)
{
    return {{"tokens_sent", t.tokens_sent},         {"graph_tokens_sent", t.graph_tokens_sent},
            {"baseline_tokens", t.baseline_tokens}, {"graph_calls", t.graph_calls},
            {"full_graph_tokens", t.full_graph_tokens}};
}
TokenLedger tokens(const json& j)
{
    TokenLedger t;
    t.tokens_sent = j.at("tokens_sent").get<std::size_t>();
    t.graph_tokens_sent = j.at("graph_tokens_sent").get<std::size_t>();
    t.baseline_tokens = j.at("baseline_tokens").get<std::size_t>();
    t.graph_calls = j.at("graph_calls").get<int>();
    t.full_graph_tokens = j.at("full_graph_tokens").get<std::size_t>();
    return t;
}

FeedbackStatus parse_status(const std::string& s)
{
    for (auto st : {FeedbackStatus::success, FeedbackStatus::timeout_unreached, FeedbackStatus::prolonged_stationary,
                    FeedbackStatus::target_not_detected, FeedbackStatus::collision})
        if (to_string(st) == s) return st;
    throw Error("unknown feedback status: " + s);
}

json feedback(const Feedback& f)
{
    return {{"status", to_string(f.status)},
            {"failed_step", f.context.failed_step},
            {"failed_node", f.context.failed_node},
            {"pose", pose(f.context.pose)},
            {"min_distance", f.context.min_distance},
            {"elapsed", f.context.elapsed},
            {"note", f.note}};
}
Feedback feedback(const json& j)
{
    Feedback f;
    f.status = parse_status(j.at("status").get<std::string>());
    f.context.failed_step = j.at("failed_step").get<int>();
    f.context.failed_node = j.at("failed_node").get<std::string>();
    f.context.pose = pose(j.at("pose"));
    f.context.min_distance = j.at("min_distance").get<double>();
    f.context.elapsed = j.at("elapsed").get<double>();
    f.note = j.at("note").get<std::string>();
    return f;
}

json plan(const std::optional<SymbolicPlan>& p)
{
    if (!p) return nullptr;
    json steps = json::array();
    for (const auto& s : p->steps) steps.push_back({{"node", s.node_id}, {"label", s.label}, {"target", vec(s.target)}});
    return {{"text", p->text()}, {"steps", steps}};
}
std::optional<SymbolicPlan> plan(const json& j)
{
    if (j.is_null()) return std::nullopt;
    SymbolicPlan p;
    for (const auto& s : j.at("steps"))
        p.steps.push_back({s.at("node").get<std::string>(), s.at("label").get<std::string>(), vec(s.at("target"))});
    return p;
}

json trace(const std::vector<RobotState>& states)
{
    json a = json::array();
    for (const auto& s : states) a.push_back(pose(s));
    return a;
}

} // namespace

std::string report_to_json_text(const EpisodeReport& r, bool include_wall_clock)
{
    json j;
    j["scenario_id"] = r.scenario_id;
    j["backend"] = r.backend;
    j["mode"] = r.mode;
    j["seed"] = r.seed;
    j["outcome"] = r.outcome;
    j["reason"] = r.reason;
    j["start"] = pose(r.start);
    j["final_pose"] = pose(r.final_pose);
    j["goal_node"] = r.goal_node;
    j["goal_position"] = vec(r.goal_position);
    j["goal_distance"] = r.goal_distance;
    j["path_length"] = r.path_length;
    j["shortest_path_length"] = r.shortest_path_length;
    j["initial_params"] = params(r.initial_params);
    j["final_params"] = params(r.final_params);

    json ret = {{"status", r.retrieval_status}};
    json recs = json::array();
    for (std::size_t i = 0; i < r.retrieval.size(); ++i)
        recs.push_back({{"id", r.retrieval.ids[i]},
                        {"time", r.retrieval.times[i]},
                        {"pose", pose(r.retrieval.poses[i])},
                        {"text", r.retrieval.texts[i]},
                        {"parameters", params(r.retrieval.parameters[i])},
                        {"score", r.retrieval.scores[i]}});
    ret["records"] = recs;
    j["retrieval"] = ret;

    json att = json::array();
    for (const auto& a : r.attempts)
        att.push_back({{"index", a.index},
                       {"params", params(a.params)},
                       {"feedback", feedback(a.feedback)},
                       {"steps_before", a.steps_before},
                       {"steps_after", a.steps_after}});
    j["attempts"] = att;

    json phases = json::array();
    for (const auto& p : r.local_phases)
        phases.push_back({{"start_epoch", p.start_epoch}, {"end_epoch", p.end_epoch}, {"status", p.status}, {"reason", p.reason}});
    j["local_phases"] = phases;

    json evo = json::array();
    for (const auto& row : r.evolution) {
        const auto& e = row.record;
        evo.push_back({{"phase", row.phase},
                       {"epoch", e.epoch},
                       {"mode", e.mode},
                       {"params", params(e.params)},
                       {"weights", weights(e.weights)},
                       {"loss", e.loss},
                       {"outcome", e.outcome},
                       {"gradient", json::array({e.gradient[0], e.gradient[1], e.gradient[2]})},
                       {"note", e.note}});
    }
    j["evolution"] = evo;

    json passes = json::array();
    for (const auto& g : r.global_passes) {
        json its = json::array();
        for (const auto& it : g.trace)
            its.push_back({{"k", it.k}, {"pool_size", it.pool_size}, {"pool", it.pool}, {"selected", it.selected},
                           {"plannable", it.plannable}, {"reason", it.reason}});
        passes.push_back({{"index", g.index},
                          {"trigger", g.trigger},
                          {"plan", plan(g.plan)},
                          {"iterations", g.iterations},
                          {"subtasks", g.subtasks},
                          {"trace", its},
                          {"warnings", g.warnings},
                          {"tokens", tokens(g.tokens)},
                          {"distilled_tokens", g.distilled_tokens}});
    }
    j["global_passes"] = passes;
    j["epochs_total"] = r.epochs_total;
    j["max_local_epochs"] = r.max_local_epochs;
    j["tokens"] = tokens(r.tokens);
    j["rgtr"] = r.rgtr;
    j["sim_time"] = r.sim_time;
    if (include_wall_clock) j[kWallClockKey] = r.wall_clock_seconds;
    j["warnings"] = r.warnings;
    j["grid_resolution"] = r.grid_resolution;
    j["final_grid"] = r.final_grid;
    j["trace"] = trace(r.trace);

    json ex = json::array();
    for (const auto& e : r.exchanges)
        ex.push_back({{"kind", to_string(e.kind)}, {"sequence_index", e.sequence_index}, {"request", e.request},
                      {"response", e.response}});
    j["exchanges"] = ex;
    return j.dump(2) + "\n";
}

EpisodeReport report_from_json_text(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("report parse: ") + e.what());
    }
    EpisodeReport r;
    try {
        r.scenario_id = j.at("scenario_id").get<std::string>();
        r.backend = j.at("backend").get<std::string>();
        r.mode = j.at("mode").get<std::string>();
        r.seed = j.at("seed").get<unsigned>();
        r.outcome = j.at("outcome").get<std::string>();
        r.reason = j.at("reason").get<std::string>();
        r.start = pose(j.at("start"));
        r.final_pose = pose(j.at("final_pose"));
        r.goal_node = j.at("goal_node").get<std::string>();
        r.goal_position = vec(j.at("goal_position"));
        r.goal_distance = j.at("goal_distance").get<double>();
        r.path_length = j.at("path_length").get<double>();
        r.shortest_path_length = j.at("shortest_path_length").get<double>();
        r.initial_params = params(j.at("initial_params"));
        r.final_params = params(j.at("final_params"));
        const auto& ret = j.at("retrieval");
        r.retrieval_status = ret.at("status").get<std::string>();
        for (const auto& rec : ret.at("records")) {
            r.retrieval.ids.push_back(rec.at("id").get<int>());
            r.retrieval.times.push_back(rec.at("time").get<double>());
            r.retrieval.poses.push_back(pose(rec.at("pose")));
            r.retrieval.texts.push_back(rec.at("text").get<std::string>());
            r.retrieval.parameters.push_back(params(rec.at("parameters")));
            r.retrieval.scores.push_back(rec.at("score").get<double>());
        }
        for (const auto& a : j.at("attempts")) {
            AttemptRecord ar;
            ar.index = a.at("index").get<int>();
            ar.params = params(a.at("params"));
            ar.feedback = feedback(a.at("feedback"));
            ar.steps_before = a.at("steps_before").get<int>();
            ar.steps_after = a.at("steps_after").get<int>();
            r.attempts.push_back(ar);
        }
        for (const auto& p : j.at("local_phases"))
            r.local_phases.push_back({p.at("start_epoch").get<int>(), p.at("end_epoch").get<int>(),
                                      p.at("status").get<std::string>(), p.at("reason").get<std::string>()});
        for (const auto& e : j.at("evolution")) {
            EvolutionTraceRow row;
            row.phase = e.at("phase").get<int>();
            row.record.epoch = e.at("epoch").get<int>();
            row.record.mode = e.at("mode").get<std::string>();
            row.record.params = params(e.at("params"));
            row.record.weights = weights(e.at("weights"));
            row.record.loss = e.at("loss").get<double>();
            row.record.outcome = e.at("outcome").get<std::string>();
            for (int i = 0; i < 3; ++i) row.record.gradient[static_cast<std::size_t>(i)] = e.at("gradient").at(i).get<double>();
            row.record.note = e.at("note").get<std::string>();
            r.evolution.push_back(row);
        }
        for (const auto& g : j.at("global_passes")) {
            GlobalPass gp;
            gp.index = g.at("index").get<int>();
            gp.trigger = g.at("trigger").get<std::string>();
            gp.plan = plan(g.at("plan"));
            gp.iterations = g.at("iterations").get<int>();
            gp.subtasks = g.at("subtasks").get<std::vector<std::string>>();
            for (const auto& it : g.at("trace"))
                gp.trace.push_back({it.at("k").get<int>(), it.at("pool_size").get<std::size_t>(),
                                    it.at("pool").get<std::vector<std::string>>(), it.at("selected").get<std::vector<std::string>>(), it.at("plannable").get<bool>(),
                                    it.at("reason").get<std::string>()});
            gp.warnings = g.at("warnings").get<std::vector<std::string>>();
            gp.tokens = tokens(g.at("tokens"));
            gp.distilled_tokens = g.at("distilled_tokens").get<std::size_t>();
            r.global_passes.push_back(gp);
        }
        r.epochs_total = j.at("epochs_total").get<int>();
        r.max_local_epochs = j.at("max_local_epochs").get<int>();
        r.tokens = tokens(j.at("tokens"));
        r.rgtr = j.at("rgtr").get<double>();
        r.sim_time = j.at("sim_time").get<double>();
        r.wall_clock_seconds = j.value(kWallClockKey, 0.0);
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        r.grid_resolution = j.at("grid_resolution").get<double>();
        r.final_grid = j.at("final_grid").get<std::vector<std::string>>();
        for (const auto& s : j.at("trace")) r.trace.push_back(pose(s));
        for (const auto& e : j.at("exchanges"))
            r.exchanges.push_back({parse_request_kind(e.at("kind").get<std::string>()), e.at("sequence_index").get<int>(),
                                   e.at("request").get<std::string>(), e.at("response").get<std::string>()});
    } catch (const json::exception& e) {
        throw Error(std::string("report field: ") + e.what());
    }
    return r;
}

void save_report(const EpisodeReport& report, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << report_to_json_text(report);
}

EpisodeReport load_report(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return report_from_json_text(ss.str());
}

std::string strip_wall_clock(const std::string& text)
{
    json j = json::parse(text);
    j.erase(kWallClockKey);
    return j.dump(2) + "\n";
}

} // namespace serp
