// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/local_planner.hpp"
#include "serp/model_clients.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace serp {

struct MemoryRecord {
    int id = -1;
    double time = 0.0;
    RobotState pose;
    std::string text;
    std::vector<float> embedding;
    PlannerParams params;
};

/// Top-k answer, best first. The four named lists mirror the answer record
/// handed back by the retrieval system.
struct RetrievalAnswer {
    std::vector<double> times;
    std::vector<RobotState> poses;
    std::vector<std::string> texts;
    std::vector<PlannerParams> parameters;
    std::vector<double> scores;
    std::vector<int> ids;

    std::size_t size() const { return ids.size(); }
};

/// Exact linear-scan vector memory of parameter records. Readers work on an
/// immutable snapshot; writers build a new snapshot and swap it in.
class ParamMemory {
public:
    explicit ParamMemory(int dimension = 64);
    ParamMemory(const ParamMemory& other);
    ParamMemory& operator=(const ParamMemory& other);

    int dimension() const { return dim_; }
    std::size_t size() const;
    std::vector<MemoryRecord> records() const;

    /// Embeds `text` and stores the record. Returns the new id.
    int memorize(double time, const RobotState& pose, const std::string& text, const PlannerParams& params,
                 const Embedder& embedder);
    /// Stores a record with a precomputed embedding (normalized on insert).
    int insert(MemoryRecord record);

    bool remove(int id);
    /// Removes every record whose parameters equal `params`; returns the count.
    int remove_params(const PlannerParams& params);

    /// Cosine top-k, descending score, ties by lower id.
    RetrievalAnswer top_k(const std::vector<float>& query, int k) const;
    /// Rank-1 parameters plus the full answer. Throws Error("cold start") on
    /// an empty store.
    std::pair<PlannerParams, RetrievalAnswer> retrieve_initial(const std::string& query, int k,
                                                               const Embedder& embedder) const;

    std::string to_json_text() const;
    /// Records stored without an embedding are embedded from their text,
    /// which requires an embedder.
    static ParamMemory from_json_text(const std::string& text, const Embedder* embedder = nullptr);
    void save(const std::filesystem::path& path) const;
    static ParamMemory load(const std::filesystem::path& path, const Embedder* embedder = nullptr);

private:
    using Snapshot = std::vector<MemoryRecord>;
    std::shared_ptr<const Snapshot> snapshot() const;

    int dim_;
    mutable std::mutex mu_;
    std::shared_ptr<const Snapshot> records_;
    int next_id_ = 0;
};

/// The answer as a record with keys times, poses, texts, parameters, scores.
std::string answer_to_json_text(const RetrievalAnswer& answer);

} // namespace serp
