// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "instances.hpp"
#include "serp/ase_engine.hpp"

#include <random>

using namespace serp;

namespace {

// Loss is (eta - target)^2 + |eta - target| through the tracking and goal
// terms; success above a threshold.
EpisodeClosure quadratic_closure(double target, double succeed_at, int* calls = nullptr)
{
    return [=](const PlannerParams& p) {
        if (calls) ++*calls;
        Episode e;
        e.states = {{p.eta - target, 0.0, 0.0}};
        e.reference = {{0.0, 0.0, 0.0}};
        e.controls = {{0.0, 0.0}};
        e.clearances = {0.0};
        e.success = p.eta >= succeed_at;
        e.outcome = e.success ? "reached" : "stationary";
        return e;
    };
}

Episode frozen_episode()
{
    Episode e;
    e.states = {{1, 1, 0}, {1, 1, 0}};
    e.reference = {{2, 1, 0}, {3, 1, 0}};
    e.controls = {{0, 0}, {0, 0}};
    e.clearances = {0.1, 0.1};
    e.outcome = "collision";
    return e;
}

class ScriptedAdvisor final : public AdvisorClient {
public:
    explicit ScriptedAdvisor(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    std::string advise_params(const ModelRequest& r) override
    {
        requests.push_back(r.payload);
        if (next_ >= replies_.size()) throw Error("offline");
        return replies_[next_++];
    }
    std::vector<std::string> requests;

private:
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
};

} // namespace

TEST_CASE("evolution loss terms")
{
    Episode e;
    e.states = {{1, 0, 0}, {2, 0, 0}};
    e.reference = {{0, 0, 0}, {2, 1, 0}};
    e.controls = {{0.5, 0}, {1.0, 0}};
    e.clearances = {0.5, 2.0};
    e.v_ref = 1.0;
    const LossWeights w{1.0, 2.0, 3.0, 4.0};
    // (1 + 0.5 - 1.5) + (1 + 0 - 6) + 4 * |(2,0) - (5,4)|
    CHECK(evolution_loss({}, w, e, {5, 4, 0}) == doctest::Approx(0.0 - 5.0 + 20.0));
    e.clearances.pop_back();
    CHECK_THROWS_AS(evolution_loss({}, w, e, {}), Error);
}

TEST_CASE("frozen closure gives an exactly zero gradient")
{
    const EpisodeClosure closure = [](const PlannerParams&) { return frozen_episode(); };
    const auto g = grad_params({2.0, 1.5, 10.0}, {}, closure, {5, 5, 0});
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 0.0);
}

TEST_CASE("finite differences recover an analytic derivative")
{
    const auto closure = quadratic_closure(7.0, 1e9);
    const auto g = grad_params({1.0, 1.0, 10.0}, {}, closure, {});
    CHECK(g[0] == doctest::Approx(0.0));
    CHECK(g[2] == doctest::Approx(2.0 * 3.0 + 1.0).epsilon(1e-6));
    // next to zero the probe goes forward only
    const auto gz = grad_params({1.0, 1.0, 0.0}, {}, closure, {});
    CHECK(gz[2] == doctest::Approx(-15.0).epsilon(1e-3));
}

TEST_CASE("non-finite probes are reported")
{
    const EpisodeClosure closure = [](const PlannerParams&) {
        Episode e = frozen_episode();
        e.states[0].x = std::nan("");
        return e;
    };
    CHECK_THROWS_WITH_AS(grad_params({1, 1, 1}, {}, closure, {}), "nondifferentiable probe", Error);
}

TEST_CASE("Richardson step halving on smooth solver closures")
{
    std::mt19937 rng(4);
    for (int t = 0; t < 5; ++t) {
        auto inst = testing::random_solver_instance(rng, true);
        const auto closure = testing::solver_closure(inst.model);
        const RobotState goal = inst.model.ref.waypoints.back();
        const auto g1 = grad_params(inst.model.params, {}, closure, goal, 1.0);
        const auto g2 = grad_params(inst.model.params, {}, closure, goal, 0.5);
        double num = 0.0, den = 0.0;
        for (int i = 0; i < 3; ++i) {
            num += (g1[i] - g2[i]) * (g1[i] - g2[i]);
            den += g2[i] * g2[i];
        }
        CHECK(std::sqrt(num) <= 0.05 * std::sqrt(den));
    }
}

TEST_CASE("AD step clips, projects and records the evaluated params")
{
    EvolutionState s;
    s.params = {1.0, 1.0, 0.5};
    const auto next = ad_step(s, {100.0, -1.0, 2.0}, 0.1, {3.5, "collision"}, 10.0);
    CHECK(next.params.q_s == doctest::Approx(0.0));
    CHECK(next.params.p_v == doctest::Approx(1.1));
    CHECK(next.params.eta == doctest::Approx(0.3));
    CHECK(next.epoch == 1);
    REQUIRE(next.history.size() == 1);
    CHECK(next.history[0].params == s.params);
    CHECK(next.history[0].mode == "AD");
    CHECK(next.history[0].loss == 3.5);
}

TEST_CASE("advice parsing")
{
    const auto a = parse_advice("q_s = 1.5, p_v: 1.3; eta = 11.5\nalpha=0.8 beta = oops gamma = -2 omega = 1e9 note = 4");
    CHECK(*a.q_s == 1.5);
    CHECK(*a.p_v == 1.3);
    CHECK(*a.eta == 11.5);
    CHECK(*a.alpha == 0.8);
    CHECK_FALSE(a.beta.has_value());
    CHECK_FALSE(a.gamma.has_value());
    CHECK_FALSE(a.omega.has_value());
    CHECK(a.warnings.size() >= 3);
}

TEST_CASE("IL step keeps values the advisor leaves out")
{
    ScriptedAdvisor adv({"eta = 16"});
    EvolutionState s;
    s.params = {2.0, 1.5, 10.0};
    s.weights = {0.5, 0.5, 0.5, 0.5};
    const auto next = il_step(s, adv, {"stationary", {}, 0.2, {1.0}}, {1.0, "stationary"});
    CHECK(next.params == PlannerParams{2.0, 1.5, 16.0});
    CHECK(next.weights == s.weights);
    CHECK(next.history.back().mode == "IL");
    REQUIRE(adv.requests.size() == 1);
    CHECK(adv.requests[0].find("FAILURE_CONTEXT") != std::string::npos);
    CHECK(adv.requests[0].find("HISTORY") != std::string::npos);
    CHECK_THROWS_WITH_AS(il_step(s, adv, {}, {}), "advisor unavailable: offline", Error);
}

TEST_CASE("schedule: IL on X, AD elsewhere, stop on success")
{
    ScriptedAdvisor adv({"eta = 5", "eta = 8"});
    const auto closure = quadratic_closure(100.0, 7.5);
    const auto out = run_ilad({1, 1, 1}, {1, 0, 0, 0}, {0, 2}, 10, closure, {}, &adv, {}, {0.0, 10.0, 1.0});
    CHECK(out.status == EvolutionOutcome::Status::success);
    REQUIRE(out.trace.size() == 3);
    CHECK(out.trace[0].mode == "IL");
    CHECK(out.trace[1].mode == "AD");
    CHECK(out.trace[2].mode == "IL");
    CHECK(out.final_params.eta == 8.0);
    CHECK(out.epochs_used == 3);
}

TEST_CASE("budget exhaustion is a local failure")
{
    int calls = 0;
    const auto closure = quadratic_closure(0.0, 1e9, &calls);
    const auto out = run_ilad({1, 1, 1}, {}, {}, 6, closure, {}, nullptr, {}, {0.1, 10.0, 1.0});
    CHECK(out.status == EvolutionOutcome::Status::local_failure);
    CHECK(out.epochs_used == 6);
    CHECK(out.trace.size() == 6);
    for (const auto& r : out.trace) CHECK(r.mode == "AD");
    CHECK(calls > 6);
}

TEST_CASE("an unreachable advisor degrades the epoch to AD")
{
    ScriptedAdvisor adv({});
    const auto closure = quadratic_closure(0.0, 1e9);
    const auto out = run_ilad({1, 1, 1}, {}, {1}, 3, closure, {}, &adv, {}, {0.1, 10.0, 1.0});
    CHECK(out.advisor_requests == 1);
    REQUIRE(out.trace.size() == 3);
    CHECK(out.trace[1].mode == "AD");
    CHECK(out.trace[1].note.find("advisor unavailable") == 0);
    CHECK(out.state.schedule == std::set<int>{1});
}

TEST_CASE("resuming continues the epoch count")
{
    const auto closure = quadratic_closure(0.0, 1e9);
    const auto first = run_ilad({1, 1, 1}, {}, {}, 8, closure, {}, nullptr, {}, {0.1, 10.0, 1.0});
    EvolutionState st = first.state;
    CHECK(st.epoch == 8);
    st.epoch = 3;
    st.history.resize(3);
    const auto resumed = run_ilad(st, closure, {}, nullptr, {}, {0.1, 10.0, 1.0});
    CHECK(resumed.start_epoch == 3);
    REQUIRE(resumed.trace.size() == 8);
    CHECK(resumed.trace[3].epoch == 3);
    CHECK(resumed.trace.back().epoch == 7);
}
