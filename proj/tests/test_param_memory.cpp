// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "serp/param_memory.hpp"

#include <algorithm>
#include <filesystem>
#include <random>

using namespace serp;

namespace {

std::vector<float> random_unit(std::mt19937& rng, int dim)
{
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(dim));
    double s = 0.0;
    for (auto& x : v) {
        x = n(rng);
        s += double(x) * x;
    }
    for (auto& x : v) x = static_cast<float>(x / std::sqrt(s));
    return v;
}

std::vector<int> oracle_top_k(const std::vector<MemoryRecord>& recs, const std::vector<float>& q, int k)
{
    std::vector<std::pair<double, int>> scored;
    for (const auto& r : recs) scored.push_back({cosine(r.embedding, q), r.id});
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<int> ids;
    for (int i = 0; i < k && i < static_cast<int>(scored.size()); ++i) ids.push_back(scored[i].second);
    return ids;
}

} // namespace

TEST_CASE("top-k equals the linear scan oracle")
{
    std::mt19937 rng(17);
    const int dim = 16;
    ParamMemory mem(dim);
    for (int i = 0; i < 1000; ++i) {
        MemoryRecord r;
        r.time = i;
        r.text = "record " + std::to_string(i);
        r.embedding = random_unit(rng, dim);
        r.params = {1.0 + i % 7, 1.0, 10.0};
        mem.insert(r);
    }
    // duplicates force score ties
    auto dup = mem.records()[5];
    dup.id = -1;
    mem.insert(dup);
    const auto recs = mem.records();
    for (int t = 0; t < 50; ++t) {
        const auto q = t == 0 ? recs[5].embedding : random_unit(rng, dim);
        for (int k : {1, 5, 32}) {
            const auto got = mem.top_k(q, k);
            CHECK(got.ids == oracle_top_k(recs, q, k));
            CHECK(std::is_sorted(got.scores.rbegin(), got.scores.rend()));
        }
    }
}

TEST_CASE("k larger than the store returns everything")
{
    HashEmbedder emb(32);
    ParamMemory mem(32);
    mem.memorize(0.0, {}, "door", {1, 1, 1}, emb);
    mem.memorize(1.0, {}, "hall", {2, 2, 2}, emb);
    CHECK(mem.top_k(emb.embed("door"), 10).size() == 2);
    CHECK_THROWS_AS(mem.top_k(emb.embed("door"), 0), Error);
}

TEST_CASE("cold start")
{
    HashEmbedder emb;
    const ParamMemory mem;
    CHECK_THROWS_WITH_AS(mem.retrieve_initial("doorway", 3, emb), "cold start", Error);
}

TEST_CASE("removing the best record exposes the runner-up")
{
    HashEmbedder emb;
    auto mem = ParamMemory::load(std::filesystem::path(SERP_FIXTURES) / "memory/doorway_records.json", &emb);
    const auto [best, answer] = mem.retrieve_initial("doorway", 3, emb);
    CHECK(best == PlannerParams{1.3, 1.0, 12.0});
    REQUIRE(answer.size() == 3);
    CHECK(answer.parameters[1] == PlannerParams{2.0, 1.5, 10.0});
    CHECK(mem.remove(answer.ids[0]));
    CHECK_FALSE(mem.remove(answer.ids[0]));
    CHECK(mem.retrieve_initial("doorway", 3, emb).first == PlannerParams{2.0, 1.5, 10.0});
}

TEST_CASE("remove by params")
{
    HashEmbedder emb;
    ParamMemory mem;
    mem.memorize(0, {}, "a door", {1, 1, 1}, emb);
    mem.memorize(0, {}, "b door", {1, 1, 1}, emb);
    mem.memorize(0, {}, "c door", {2, 1, 1}, emb);
    CHECK(mem.remove_params({1, 1, 1}) == 2);
    CHECK(mem.size() == 1);
}

TEST_CASE("json round trip keeps records and ids")
{
    HashEmbedder emb;
    ParamMemory mem;
    mem.memorize(3.5, {1, 2, 0.5}, "narrow doorway", {1.3, 1, 12}, emb);
    mem.memorize(4.0, {2, 2, 0}, "open hall", {2, 1.5, 10}, emb);
    const auto back = ParamMemory::from_json_text(mem.to_json_text());
    REQUIRE(back.size() == 2);
    const auto a = mem.records(), b = back.records();
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].text == b[i].text);
        CHECK(a[i].params == b[i].params);
        CHECK(a[i].pose == b[i].pose);
        CHECK(a[i].embedding == b[i].embedding);
    }
    const int next = const_cast<ParamMemory&>(back).memorize(5, {}, "kitchen", {1, 1, 1}, emb);
    CHECK(next == 2);
}

TEST_CASE("invalid inserts are rejected")
{
    HashEmbedder emb;
    ParamMemory mem(64);
    CHECK_THROWS_AS(mem.memorize(0, {}, "", {1, 1, 1}, emb), Error);
    CHECK_THROWS_AS(mem.memorize(0, {}, "x", {-1, 1, 1}, emb), Error);
    MemoryRecord r;
    r.text = "short";
    r.embedding = {1.0f, 0.0f};
    CHECK_THROWS_AS(mem.insert(r), Error);
}

TEST_CASE("answer record layout")
{
    HashEmbedder emb;
    ParamMemory mem;
    mem.memorize(1, {1, 1, 0}, "doorway", {1, 2, 3}, emb);
    const auto text = answer_to_json_text(mem.top_k(emb.embed("doorway"), 1));
    for (const char* key : {"times", "poses", "texts", "parameters", "scores"})
        CHECK(text.find(key) != std::string::npos);
}
