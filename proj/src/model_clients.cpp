// SPDX-License-Identifier: Apache-2.0

#include "serp/model_clients.hpp"

#include "serp/common.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace serp {

using nlohmann::json;

std::string to_string(RequestKind kind)
{
    switch (kind) {
    case RequestKind::decompose: return "decompose";
    case RequestKind::distill_select: return "distill_select";
    case RequestKind::synthesize: return "synthesize";
    case RequestKind::il_advise: return "il_advise";
    }
    return "decompose";
}

RequestKind parse_request_kind(const std::string& text)
{
    if (text == "decompose") return RequestKind::decompose;
    if (text == "distill_select") return RequestKind::distill_select;
    if (text == "synthesize") return RequestKind::synthesize;
    if (text == "il_advise") return RequestKind::il_advise;
    throw Error("unknown request kind: " + text);
}

void ExchangeLog::append(Exchange e)
{
    std::lock_guard lock(mu_);
    entries_.push_back(std::move(e));
}

std::vector<Exchange> ExchangeLog::entries() const
{
    std::lock_guard lock(mu_);
    return entries_;
}

std::size_t ExchangeLog::size() const
{
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<std::string> words(const std::string& text)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

HashEmbedder::HashEmbedder(int dimension) : dim_(dimension)
{
    if (dim_ < 1) throw Error("embedding dimension must be positive");
}

std::vector<float> HashEmbedder::embed(const std::string& text) const
{
    const auto ws = words(text);
    if (ws.empty()) throw Error("embed failed: no words in text");
    std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
    for (const auto& w : ws) acc[fnv1a(w) % static_cast<std::uint64_t>(dim_)] += 1.0;
    double n2 = 0.0;
    for (double v : acc) n2 += v * v;
    const double inv = 1.0 / std::sqrt(n2);
    std::vector<float> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] * inv);
    return out;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b)
{
    if (a.size() != b.size()) throw Error("embedding dimension mismatch");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += static_cast<double>(a[i]) * b[i];
        aa += static_cast<double>(a[i]) * a[i];
        bb += static_cast<double>(b[i]) * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

void MockScript::add(Entry e)
{
    std::lock_guard lock(mu_);
    entries_.push_back(std::move(e));
    used_.push_back(false);
}

void MockScript::add_sequence(RequestKind kind, std::string response)
{
    add({kind, Matcher::sequence, 0, std::move(response)});
}

void MockScript::add_exact(RequestKind kind, const std::string& payload, std::string response)
{
    add({kind, Matcher::exact_hash, fnv1a(payload), std::move(response)});
}

void MockScript::set_fallback(RequestKind kind, std::string response)
{
    std::lock_guard lock(mu_);
    for (auto& [k, r] : fallbacks_) {
        if (k == kind) {
            r = std::move(response);
            return;
        }
    }
    fallbacks_.emplace_back(kind, std::move(response));
}

std::string MockScript::respond(const ModelRequest& request)
{
    std::lock_guard lock(mu_);
    const std::uint64_t h = fnv1a(request.payload);
    for (const auto& e : entries_)
        if (e.kind == request.kind && e.matcher == Matcher::exact_hash && e.hash == h) return e.response;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.kind == request.kind && e.matcher == Matcher::sequence && !used_[i]) {
            used_[i] = true;
            return e.response;
        }
    }
    for (const auto& [k, r] : fallbacks_)
        if (k == request.kind) return r;
    throw Error("script exhausted: " + to_string(request.kind));
}

std::size_t MockScript::remaining(RequestKind kind) const
{
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].kind == kind && entries_[i].matcher == Matcher::sequence && !used_[i]) ++n;
    return n;
}

namespace {

// Responses may be given as a string or as a list of lines.
std::string response_text(const json& j)
{
    if (j.is_string()) return j.get<std::string>();
    if (j.is_array()) {
        std::string out;
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) out += '\n';
            out += j[i].get<std::string>();
        }
        return out;
    }
    if (j.is_object()) return j.dump();
    throw Error("malformed script: response must be text, a list of lines or a record");
}

} // namespace

MockScript::MockScript(MockScript&& other) noexcept
{
    std::lock_guard lock(other.mu_);
    entries_ = std::move(other.entries_);
    used_ = std::move(other.used_);
    fallbacks_ = std::move(other.fallbacks_);
}

MockScript MockScript::from_json_text(const std::string& text)
{
    MockScript s;
    try {
        const json doc = json::parse(text);
        for (const auto& e : doc.value("entries", json::array())) {
            Entry entry;
            entry.kind = parse_request_kind(e.at("kind").get<std::string>());
            const std::string match = e.value("match", std::string("sequence"));
            entry.response = response_text(e.at("response"));
            if (match == "sequence") {
                entry.matcher = Matcher::sequence;
            } else if (match == "exact") {
                entry.matcher = Matcher::exact_hash;
                if (e.contains("payload")) {
                    entry.hash = fnv1a(e.at("payload").get<std::string>());
                } else {
                    entry.hash = std::stoull(e.at("hash").get<std::string>(), nullptr, 16);
                }
            } else {
                throw Error("malformed script: unknown matcher " + match);
            }
            s.add(std::move(entry));
        }
        if (doc.contains("fallback")) {
            for (const auto& [k, v] : doc.at("fallback").items()) s.set_fallback(parse_request_kind(k), response_text(v));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("malformed script: ") + e.what());
    }
    return s;
}

MockScript MockScript::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open script file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

MockChatClient::MockChatClient(std::shared_ptr<MockScript> script, std::shared_ptr<ExchangeLog> log)
    : script_(script ? std::move(script) : std::make_shared<MockScript>()), log_(std::move(log))
{
}

std::string MockChatClient::chat(const ModelRequest& request)
{
    std::string response = script_->respond(request);
    if (log_) log_->append({request.kind, request.sequence_index, request.payload, response});
    return response;
}

MockAdvisorClient::MockAdvisorClient(std::shared_ptr<MockScript> script, std::shared_ptr<ExchangeLog> log)
    : script_(script ? std::move(script) : std::make_shared<MockScript>()), log_(std::move(log))
{
}

std::string MockAdvisorClient::advise_params(const ModelRequest& request)
{
    std::string response = script_->respond(request);
    if (log_) log_->append({request.kind, request.sequence_index, request.payload, response});
    return response;
}

std::string SentinelTransport::post_json(const std::string& path, const std::string& /*body*/)
{
    {
        std::lock_guard lock(mu_);
        ++attempts_;
    }
    throw Error("network access attempted: " + path);
}

int SentinelTransport::attempts() const
{
    std::lock_guard lock(mu_);
    return attempts_;
}

HttpConfig HttpConfig::from_env()
{
    auto get = [](const char* name) {
        const char* v = std::getenv(name);
        return v ? std::string(v) : std::string{};
    };
    HttpConfig c;
    c.endpoint = get("SERP_ENDPOINT");
    c.model = get("SERP_MODEL");
    c.api_key = get("SERP_API_KEY");
    c.embed_model = get("SERP_EMBED_MODEL");
    if (const auto d = get("SERP_EMBED_DIM"); !d.empty()) c.embed_dimension = std::atoi(d.c_str());
    if (const auto t = get("SERP_TIMEOUT"); !t.empty()) c.timeout_seconds = std::atoi(t.c_str());
    return c;
}

namespace {

class HttplibTransport final : public HttpTransport {
public:
    explicit HttplibTransport(HttpConfig config) : config_(std::move(config)) {}

    std::string post_json(const std::string& path, const std::string& body) override
    {
        if (config_.endpoint.empty()) throw Error("SERP_ENDPOINT is not set");
        httplib::Client cli(config_.endpoint);
        cli.set_connection_timeout(config_.timeout_seconds, 0);
        cli.set_read_timeout(config_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
        auto res = cli.Post(path, headers, body, "application/json");
        if (!res) throw Error("http transport failed: " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300) throw Error("http status " + std::to_string(res->status));
        return res->body;
    }

private:
    HttpConfig config_;
};

std::mutex g_transport_mu;
std::shared_ptr<HttpTransport> g_default_transport;

const char* system_prompt(RequestKind kind)
{
    switch (kind) {
    case RequestKind::decompose:
        return "Decompose the instruction into atomic subtasks. Reply with one subtask per line and nothing else.";
    case RequestKind::distill_select:
        return "Select the scene graph elements relevant to the subtasks. Reply with one node id per line and nothing "
               "else.";
    case RequestKind::synthesize:
        return "Write a plan over the given scene graph. Reply with one goto(node_id) per line, or the single token "
               "NOT_PLANNABLE.";
    case RequestKind::il_advise: return kAdvisorInstruction;
    }
    return "";
}

} // namespace

const char* const kAdvisorInstruction =
    "You tune a receding-horizon local planner. Given the failure context and the history of parameters and losses, "
    "propose new values. Reply with a single flat JSON object with numeric keys q_s, p_v, eta, alpha, beta, gamma, "
    "omega and nothing else.";

std::shared_ptr<HttpTransport> make_httplib_transport(const HttpConfig& config)
{
    return std::make_shared<HttplibTransport>(config);
}

void set_default_transport(std::shared_ptr<HttpTransport> transport)
{
    std::lock_guard lock(g_transport_mu);
    g_default_transport = std::move(transport);
}

std::shared_ptr<HttpTransport> default_transport(const HttpConfig& config)
{
    std::lock_guard lock(g_transport_mu);
    if (g_default_transport) return g_default_transport;
    return make_httplib_transport(config);
}

HttpChatClient::HttpChatClient(HttpConfig config, std::shared_ptr<HttpTransport> transport,
                               std::shared_ptr<ExchangeLog> log)
    : config_(std::move(config)), transport_(std::move(transport)), log_(std::move(log))
{
    if (!transport_) transport_ = default_transport(config_);
}

std::string HttpChatClient::chat(const ModelRequest& request)
{
    const json body = {
        {"model", config_.model},
        {"temperature", 0},
        {"messages",
         json::array({{{"role", "system"}, {"content", system_prompt(request.kind)}},
                      {{"role", "user"}, {"content", request.payload}}})},
    };
    std::string reply;
    try {
        reply = transport_->post_json("/v1/chat/completions", body.dump());
    } catch (const Error& e) {
        throw Error(std::string("llm unavailable: ") + e.what());
    }
    std::string content;
    try {
        const json doc = json::parse(reply);
        content = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(std::string("llm unavailable: malformed reply: ") + e.what());
    }
    if (log_) log_->append({request.kind, request.sequence_index, request.payload, content});
    return content;
}

HttpAdvisorClient::HttpAdvisorClient(HttpConfig config, std::shared_ptr<HttpTransport> transport,
                                     std::shared_ptr<ExchangeLog> log)
    : chat_(std::move(config), std::move(transport), std::move(log))
{
}

std::string HttpAdvisorClient::advise_params(const ModelRequest& request)
{
    try {
        return chat_.chat(request);
    } catch (const Error& e) {
        throw Error(std::string("advisor unavailable: ") + e.what());
    }
}

HttpEmbedder::HttpEmbedder(HttpConfig config, std::shared_ptr<HttpTransport> transport, int dimension)
    : config_(std::move(config)), transport_(std::move(transport)), dim_(dimension)
{
    if (!transport_) transport_ = default_transport(config_);
}

std::vector<float> HttpEmbedder::embed(const std::string& text) const
{
    const std::string model = config_.embed_model.empty() ? config_.model : config_.embed_model;
    const json body = {{"model", model}, {"input", text}};
    std::vector<float> v;
    try {
        const json doc = json::parse(transport_->post_json("/v1/embeddings", body.dump()));
        v = doc.at("data").at(0).at("embedding").get<std::vector<float>>();
    } catch (const json::exception& e) {
        throw Error(std::string("embed failed: ") + e.what());
    } catch (const Error& e) {
        throw Error(std::string("embed failed: ") + e.what());
    }
    if (static_cast<int>(v.size()) != dim_) throw Error("embed failed: dimension " + std::to_string(v.size()));
    double n2 = 0.0;
    for (float x : v) n2 += static_cast<double>(x) * x;
    if (!(n2 > 0.0)) throw Error("embed failed: zero vector");
    const double inv = 1.0 / std::sqrt(n2);
    for (float& x : v) x = static_cast<float>(x * inv);
    return v;
}

Backend parse_backend(const std::string& text)
{
    if (text == "mock") return Backend::mock;
    if (text == "http") return Backend::http;
    throw Error("unknown backend: " + text);
}

ModelClients make_mock_clients(std::shared_ptr<MockScript> llm_script, std::shared_ptr<MockScript> vlm_script)
{
    ModelClients c;
    c.log = std::make_shared<ExchangeLog>();
    c.llm = std::make_shared<MockChatClient>(std::move(llm_script), c.log);
    c.advisor = std::make_shared<MockAdvisorClient>(std::move(vlm_script), c.log);
    c.embedder = std::make_shared<HashEmbedder>(64);
    return c;
}

ModelClients make_http_clients(const HttpConfig& config, std::shared_ptr<HttpTransport> transport)
{
    if (!transport) transport = default_transport(config);
    ModelClients c;
    c.log = std::make_shared<ExchangeLog>();
    c.llm = std::make_shared<HttpChatClient>(config, transport, c.log);
    c.advisor = std::make_shared<HttpAdvisorClient>(config, transport, c.log);
    if (config.embed_model.empty()) {
        c.embedder = std::make_shared<HashEmbedder>(64);
    } else {
        c.embedder = std::make_shared<HttpEmbedder>(config, transport, config.embed_dimension);
    }
    return c;
}

} // namespace serp
