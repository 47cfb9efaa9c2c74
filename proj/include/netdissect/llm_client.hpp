#pragma once

#include "netdissect/corpus.hpp"
#include "netdissect/embedding.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>

namespace netdissect {

enum class LlmMode { live, replay, mock };

std::string to_string(LlmMode m);
LlmMode parse_llm_mode(const std::string& s);

struct LlmConfig {
    std::string endpoint_url = "http://127.0.0.1:8000/v1/chat/completions";
    std::string model_id = "llama-2-13b-chat";
    double temperature = 0.0;
    int max_tokens = 512;
    LlmMode mode = LlmMode::replay;
    int max_in_flight = 4;
    int max_retries = 3;
};

struct CompletionRecord {
    std::string key;
    std::string prompt;
    std::string completion;
    std::string timestamp;
};

/// Hex SHA-256 over model_id, a NUL separator, and the prompt.
std::string completion_key(const std::string& model_id, const std::string& prompt);

/// Append-only JSON-lines store of completions. Thread-safe.
class CompletionCache {
public:
    CompletionCache() = default;
    /// Loads existing records from `path` (if present); later appends go to the same file.
    explicit CompletionCache(std::filesystem::path path);

    std::optional<std::string> lookup(const std::string& key) const;
    void append(CompletionRecord record);
    std::size_t size() const;
    std::vector<CompletionRecord> records() const;

private:
    mutable std::mutex mu_;
    std::optional<std::filesystem::path> path_;
    std::vector<CompletionRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// The network side of a live call. Tests substitute counting fakes.
class LlmTransport {
public:
    virtual ~LlmTransport() = default;
    virtual std::string send(const LlmConfig& config, const std::string& prompt) = 0;
};

/// OpenAI-style chat-completions over HTTP(S). Reads the bearer token from
/// AND_LLM_TOKEN when set.
class HttpTransport final : public LlmTransport {
public:
    std::string send(const LlmConfig& config, const std::string& prompt) override;
};

/// Request body for a chat-completions call.
std::string chat_request_body(const LlmConfig& config, const std::string& prompt);
/// Extracts choices[0].message.content.
std::string parse_chat_response(const std::string& body);

/// Adapts a plain function into a transport (scripted fixtures, tests).
class FunctionTransport final : public LlmTransport {
public:
    using Fn = std::function<std::string(const std::string& prompt)>;
    explicit FunctionTransport(Fn fn) : fn_(std::move(fn)) {}
    std::string send(const LlmConfig&, const std::string& prompt) override { return fn_(prompt); }

private:
    Fn fn_;
};

/// Deterministic templated reply used in mock mode.
std::string mock_reply(const std::string& prompt);

class LlmClient {
public:
    LlmClient(LlmConfig config, std::shared_ptr<CompletionCache> cache,
              std::shared_ptr<LlmTransport> transport = std::make_shared<HttpTransport>());

    std::string complete(const std::string& prompt);

    const LlmConfig& config() const { return config_; }
    const CompletionCache& cache() const { return *cache_; }
    /// Calls that reached the transport (live misses only).
    std::size_t transport_calls() const { return transport_calls_.load(); }

    /// Memoized per-word verdict of the acoustic-adjective filter.
    bool is_acoustic_adjective(const std::string& word);

private:
    LlmConfig config_;
    std::shared_ptr<CompletionCache> cache_;
    std::shared_ptr<LlmTransport> transport_;
    std::unique_ptr<std::counting_semaphore<>> in_flight_;
    std::atomic<std::size_t> transport_calls_{0};
    std::mutex memo_mu_;
    std::map<std::string, bool> adjective_memo_;
};

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

std::string summarize_prompt(const std::vector<std::string>& descriptions);
std::string acoustic_adjective_prompt(const std::string& word);
std::string icl_prompt(const std::string& summary, const ConceptSet& concepts, int shots);

/// First yes/no token of a completion; nullopt when neither appears.
std::optional<bool> parse_yes_no(const std::string& completion);

enum class IclMatch { exact, substring, nearest };
std::string to_string(IclMatch m);

struct IclResult {
    std::string concept_name;
    IclMatch match = IclMatch::exact;
    std::string raw_answer;
};

/// Parses an ICL completion against the concept set. The last line starting
/// with "Answer" wins; otherwise the longest concept occurring verbatim in
/// the completion; otherwise (when an embedder is supplied and an answer
/// line exists) the concept nearest to the answer by cosine.
IclResult parse_icl_answer(const std::string& completion, const ConceptSet& concepts,
                           const TextEmbedder* embedder = nullptr);

IclResult icl_select_concept(const std::string& summary, const ConceptSet& concepts, int shots, LlmClient& client,
                             const TextEmbedder* embedder = nullptr);

}  // namespace netdissect
