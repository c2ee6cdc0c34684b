// SPDX-License-Identifier: Apache-2.0

#include "serp/param_memory.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace serp {

using json = nlohmann::json;

namespace {

void normalize(std::vector<float>& v)
{
    double n2 = 0.0;
    for (float x : v) n2 += static_cast<double>(x) * x;
    const double n = std::sqrt(n2);
    if (!(n > 0.0) || !std::isfinite(n)) throw Error("embed failed: zero or non-finite embedding");
    for (float& x : v) x = static_cast<float>(x / n);
}

json params_json(const PlannerParams& p) { return json::array({p.q_s, p.p_v, p.eta}); }
json pose_json(const RobotState& s) { return json::array({s.x, s.y, s.theta}); }

} // namespace

ParamMemory::ParamMemory(int dimension) : dim_(dimension), records_(std::make_shared<const Snapshot>())
{
    if (dimension < 1) throw Error("memory dimension must be >= 1");
}

ParamMemory::ParamMemory(const ParamMemory& other) : dim_(other.dim_)
{
    std::lock_guard lock(other.mu_);
    records_ = other.records_;
    next_id_ = other.next_id_;
}

ParamMemory& ParamMemory::operator=(const ParamMemory& other)
{
    if (this == &other) return *this;
    std::scoped_lock lock(mu_, other.mu_);
    dim_ = other.dim_;
    records_ = other.records_;
    next_id_ = other.next_id_;
    return *this;
}

std::shared_ptr<const ParamMemory::Snapshot> ParamMemory::snapshot() const
{
    std::lock_guard lock(mu_);
    return records_;
}

std::size_t ParamMemory::size() const { return snapshot()->size(); }
std::vector<MemoryRecord> ParamMemory::records() const { return *snapshot(); }

int ParamMemory::memorize(double time, const RobotState& pose, const std::string& text, const PlannerParams& params,
                          const Embedder& embedder)
{
    if (text.empty()) throw Error("memorize: empty text");
    MemoryRecord r;
    r.time = time;
    r.pose = pose;
    r.text = text;
    r.params = params;
    try {
        r.embedding = embedder.embed(text);
    } catch (const Error& e) {
        const std::string what = e.what();
        throw Error(what.rfind("embed failed", 0) == 0 ? what : "embed failed: " + what);
    }
    return insert(std::move(r));
}

int ParamMemory::insert(MemoryRecord record)
{
    if (record.text.empty()) throw Error("memorize: empty text");
    if (static_cast<int>(record.embedding.size()) != dim_)
        throw Error("embedding dimension mismatch: expected " + std::to_string(dim_) + ", got " +
                    std::to_string(record.embedding.size()));
    if (!record.params.valid()) throw Error("memorize: invalid params");
    normalize(record.embedding);
    std::lock_guard lock(mu_);
    auto next = std::make_shared<Snapshot>(*records_);
    record.id = next_id_++;
    next->push_back(std::move(record));
    records_ = std::move(next);
    return next_id_ - 1;
}

bool ParamMemory::remove(int id)
{
    std::lock_guard lock(mu_);
    auto next = std::make_shared<Snapshot>(*records_);
    const auto it = std::find_if(next->begin(), next->end(), [id](const MemoryRecord& r) { return r.id == id; });
    if (it == next->end()) return false;
    next->erase(it);
    records_ = std::move(next);
    return true;
}

int ParamMemory::remove_params(const PlannerParams& params)
{
    std::lock_guard lock(mu_);
    auto next = std::make_shared<Snapshot>(*records_);
    const auto before = next->size();
    std::erase_if(*next, [&](const MemoryRecord& r) { return r.params == params; });
    const int removed = static_cast<int>(before - next->size());
    records_ = std::move(next);
    return removed;
}

RetrievalAnswer ParamMemory::top_k(const std::vector<float>& query, int k) const
{
    if (k < 1) throw Error("retrieve: k must be >= 1");
    if (static_cast<int>(query.size()) != dim_) throw Error("embedding dimension mismatch");
    const auto snap = snapshot();
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(snap->size());
    for (std::size_t i = 0; i < snap->size(); ++i) scored.push_back({cosine(query, (*snap)[i].embedding), i});
    std::stable_sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return (*snap)[a.second].id < (*snap)[b.second].id;
    });
    RetrievalAnswer ans;
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    for (std::size_t i = 0; i < n; ++i) {
        const MemoryRecord& r = (*snap)[scored[i].second];
        ans.times.push_back(r.time);
        ans.poses.push_back(r.pose);
        ans.texts.push_back(r.text);
        ans.parameters.push_back(r.params);
        ans.scores.push_back(scored[i].first);
        ans.ids.push_back(r.id);
    }
    return ans;
}

std::pair<PlannerParams, RetrievalAnswer> ParamMemory::retrieve_initial(const std::string& query, int k,
                                                                        const Embedder& embedder) const
{
    if (size() == 0) throw Error("cold start");
    std::vector<float> q;
    try {
        q = embedder.embed(query);
    } catch (const Error& e) {
        throw Error(std::string("embed failed: ") + e.what());
    }
    RetrievalAnswer ans = top_k(q, k);
    if (ans.size() == 0) throw Error("cold start");
    return {ans.parameters.front(), std::move(ans)};
}

std::string ParamMemory::to_json_text() const
{
    const auto snap = snapshot();
    json recs = json::array();
    for (const auto& r : *snap) {
        recs.push_back({{"id", r.id},
                        {"time", r.time},
                        {"pose", pose_json(r.pose)},
                        {"text", r.text},
                        {"params", params_json(r.params)},
                        {"embedding", r.embedding}});
    }
    int next_id = 0;
    {
        std::lock_guard lock(mu_);
        next_id = next_id_;
    }
    return json{{"dimension", dim_}, {"next_id", next_id}, {"records", recs}}.dump(1) + "\n";
}

ParamMemory ParamMemory::from_json_text(const std::string& text, const Embedder* embedder)
{
    try {
        const json doc = json::parse(text);
        ParamMemory m(doc.value("dimension", 64));
        auto snap = std::make_shared<Snapshot>();
        int next_id = 0;
        for (const auto& j : doc.at("records")) {
            MemoryRecord r;
            r.id = j.value("id", static_cast<int>(snap->size()));
            r.time = j.value("time", 0.0);
            if (j.contains("pose")) {
                const auto& p = j.at("pose");
                r.pose = {p.at(0).get<double>(), p.at(1).get<double>(), p.size() > 2 ? p.at(2).get<double>() : 0.0};
            }
            r.text = j.at("text").get<std::string>();
            const auto& pj = j.at("params");
            r.params = {pj.at(0).get<double>(), pj.at(1).get<double>(), pj.at(2).get<double>()};
            if (j.contains("embedding")) {
                r.embedding = j.at("embedding").get<std::vector<float>>();
            } else if (embedder) {
                r.embedding = embedder->embed(r.text);
            } else {
                throw Error("memory record " + std::to_string(r.id) + " has no embedding and no embedder was given");
            }
            if (static_cast<int>(r.embedding.size()) != m.dim_) throw Error("embedding dimension mismatch");
            normalize(r.embedding);
            if (r.text.empty()) throw Error("memory record with empty text");
            next_id = std::max(next_id, r.id + 1);
            snap->push_back(std::move(r));
        }
        m.next_id_ = std::max(next_id, doc.value("next_id", 0));
        m.records_ = std::move(snap);
        return m;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed memory file: ") + e.what());
    }
}

void ParamMemory::save(const std::filesystem::path& path) const
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write memory file: " + path.string());
    out << to_json_text();
}

ParamMemory ParamMemory::load(const std::filesystem::path& path, const Embedder* embedder)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open memory file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str(), embedder);
}

std::string answer_to_json_text(const RetrievalAnswer& a)
{
    json times = a.times;
    json poses = json::array();
    for (const auto& p : a.poses) poses.push_back(pose_json(p));
    json params = json::array();
    for (const auto& p : a.parameters) params.push_back(params_json(p));
    return json{{"times", times}, {"poses", poses}, {"texts", a.texts}, {"parameters", params}, {"scores", a.scores}}
        .dump();
}

} // namespace serp
