// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace serp {

enum class RequestKind { decompose, distill_select, synthesize, il_advise };

std::string to_string(RequestKind kind);
RequestKind parse_request_kind(const std::string& text);

struct ModelRequest {
    RequestKind kind = RequestKind::decompose;
    std::string payload;
    int sequence_index = 0;   // position of this request within the episode
};

/// One request/response pair as it appears in the episode log.
struct Exchange {
    RequestKind kind = RequestKind::decompose;
    int sequence_index = 0;
    std::string request;
    std::string response;
};

/// Append-only, thread-safe record of every model exchange.
class ExchangeLog {
public:
    void append(Exchange e);
    std::vector<Exchange> entries() const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::vector<Exchange> entries_;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string chat(const ModelRequest& request) = 0;
};

/// The parameter advisor. At desk scale it receives textual failure context
/// only, no images.
class AdvisorClient {
public:
    virtual ~AdvisorClient() = default;
    virtual std::string advise_params(const ModelRequest& request) = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    /// Unit-norm vector of dimension(). Throws Error("embed failed").
    virtual std::vector<float> embed(const std::string& text) const = 0;
    virtual int dimension() const = 0;
};

/// Lowercased alphanumeric words of a text.
std::vector<std::string> words(const std::string& text);

/// Hashed bag of words: each word adds 1 to bucket fnv1a(word) mod D, then the
/// vector is L2-normalized.
class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(int dimension = 64);
    std::vector<float> embed(const std::string& text) const override;
    int dimension() const override { return dim_; }

private:
    int dim_;
};

double cosine(const std::vector<float>& a, const std::vector<float>& b);

std::uint64_t fnv1a(const std::string& text);

/// Canned responses. An entry either matches by exact payload hash or is
/// consumed in order among the entries of its kind. Hash entries win over
/// sequence entries; a per-kind fallback answers anything left over.
class MockScript {
public:
    enum class Matcher { exact_hash, sequence };

    MockScript() = default;
    MockScript(MockScript&& other) noexcept;

    struct Entry {
        RequestKind kind = RequestKind::decompose;
        Matcher matcher = Matcher::sequence;
        std::uint64_t hash = 0;   // fnv1a of the payload, exact_hash only
        std::string response;
    };

    void add(Entry e);
    void add_sequence(RequestKind kind, std::string response);
    void add_exact(RequestKind kind, const std::string& payload, std::string response);
    void set_fallback(RequestKind kind, std::string response);

    /// Throws Error("script exhausted") when nothing matches.
    std::string respond(const ModelRequest& request);

    std::size_t remaining(RequestKind kind) const;

    static MockScript from_json_text(const std::string& text);
    static MockScript load(const std::filesystem::path& path);

private:
    mutable std::mutex mu_;
    std::vector<Entry> entries_;
    std::vector<bool> used_;
    std::vector<std::pair<RequestKind, std::string>> fallbacks_;
};

class MockChatClient final : public ChatClient {
public:
    MockChatClient(std::shared_ptr<MockScript> script, std::shared_ptr<ExchangeLog> log = nullptr);
    std::string chat(const ModelRequest& request) override;

private:
    std::shared_ptr<MockScript> script_;
    std::shared_ptr<ExchangeLog> log_;
};

class MockAdvisorClient final : public AdvisorClient {
public:
    MockAdvisorClient(std::shared_ptr<MockScript> script, std::shared_ptr<ExchangeLog> log = nullptr);
    std::string advise_params(const ModelRequest& request) override;

private:
    std::shared_ptr<MockScript> script_;
    std::shared_ptr<ExchangeLog> log_;
};

/// Minimal POST transport so the HTTP clients can be exercised (or
/// forbidden) without a network.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    /// Returns the response body. Throws Error on transport failure.
    virtual std::string post_json(const std::string& path, const std::string& body) = 0;
};

/// Transport that refuses every call and counts the attempts.
class SentinelTransport final : public HttpTransport {
public:
    std::string post_json(const std::string& path, const std::string& body) override;
    int attempts() const;

private:
    mutable std::mutex mu_;
    int attempts_ = 0;
};

struct HttpConfig {
    std::string endpoint;        // SERP_ENDPOINT, e.g. http://localhost:8000
    std::string model;           // SERP_MODEL
    std::string api_key;         // SERP_API_KEY
    std::string embed_model;     // SERP_EMBED_MODEL; hashed mock embeddings when empty
    int embed_dimension = 64;    // SERP_EMBED_DIM
    int timeout_seconds = 60;

    static HttpConfig from_env();
};

/// Transport backed by cpp-httplib.
std::shared_ptr<HttpTransport> make_httplib_transport(const HttpConfig& config);

/// Swappable default used whenever a caller asks for an HTTP backend without
/// giving a transport. Tests install a SentinelTransport here.
void set_default_transport(std::shared_ptr<HttpTransport> transport);
std::shared_ptr<HttpTransport> default_transport(const HttpConfig& config);

/// Chat-completions compatible client (temperature 0).
class HttpChatClient final : public ChatClient {
public:
    HttpChatClient(HttpConfig config, std::shared_ptr<HttpTransport> transport,
                   std::shared_ptr<ExchangeLog> log = nullptr);
    std::string chat(const ModelRequest& request) override;

private:
    HttpConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    std::shared_ptr<ExchangeLog> log_;
};

class HttpAdvisorClient final : public AdvisorClient {
public:
    HttpAdvisorClient(HttpConfig config, std::shared_ptr<HttpTransport> transport,
                      std::shared_ptr<ExchangeLog> log = nullptr);
    std::string advise_params(const ModelRequest& request) override;

private:
    HttpChatClient chat_;
};

class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(HttpConfig config, std::shared_ptr<HttpTransport> transport, int dimension);
    std::vector<float> embed(const std::string& text) const override;
    int dimension() const override { return dim_; }

private:
    HttpConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    int dim_;
};

/// Instruction prepended to advisor requests on the HTTP backend.
extern const char* const kAdvisorInstruction;

/// The three model roles for one episode.
struct ModelClients {
    std::shared_ptr<ChatClient> llm;
    std::shared_ptr<AdvisorClient> advisor;
    std::shared_ptr<Embedder> embedder;
    std::shared_ptr<ExchangeLog> log;
};

enum class Backend { mock, http };
Backend parse_backend(const std::string& text);

/// Mock clients over the given scripts (either may be null: an empty script).
ModelClients make_mock_clients(std::shared_ptr<MockScript> llm_script, std::shared_ptr<MockScript> vlm_script);
/// HTTP clients; embeddings stay on the hashed mock unless SERP_EMBED_MODEL is set.
ModelClients make_http_clients(const HttpConfig& config, std::shared_ptr<HttpTransport> transport = nullptr);

} // namespace serp
