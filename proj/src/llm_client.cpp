#include "netdissect/llm_client.hpp"

#include "netdissect/error.hpp"
#include "netdissect/text.hpp"

#include "httplib.h"
#include "json.hpp"
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>
#include <thread>

namespace netdissect {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSummarizeInstruction =
    "Here are descriptions of some audio clips. Please summarize these descriptions by identifying their "
    "commonalities.";

constexpr std::string_view kAdjectiveQuestion =
    "Can the adjective be used to describe the tone, emotion, or acoustic features of audio, music, or any other "
    "form of sound? Answer yes or no and give the reason.";

constexpr std::string_view kIclHeader = "You have a set of object classnames:";

constexpr std::string_view kIclInstruction =
    "The following is a description about some audio clips. Based on the description, select a classname out of the "
    "above classnames that matches the description most.";

struct IclShot {
    std::string_view description;
    std::string_view response;
    std::string_view answer;
};

constexpr IclShot kShots[2] = {
    {"The audio features a car meowing: All of the clips contain the sound of a cat meowing. Loud sound: These clips "
     "are all of loud sound but with varying degrees of intensity. Repetitive barking: Clips 1 and 4 are repetitive, "
     "with the cat meowing multiple times in each clip. Poor audio quality: All clips have poor audio quality, with "
     "either distortion, muffling, or apparent background noises.",
     "We know these clips are about the class \"cat\" in the concept set. We can get this answer since the "
     "description mentions All of the clips contain the sound of a cat meowing.",
     "cat"},
    {"They all feature a person snoring loudly. The snoring starts off slow and gets louder over time. The audio is "
     "recorded in mono. There are no other sounds in the background. The snoring is described as loud and intense. "
     "The audio clips differ in the following ways. The first clip features a man snoring, while the second and "
     "fourth clips feature a person snoring (gender not specified). The third clip features a zombie growling and "
     "snarling, while the other clips only feature snoring. The third clip is described as scary and creepy, while "
     "the other clips are not. The third clip is intended for use in a horror movie or zombie video game, while the "
     "other clips do not have specific intended uses stated. The third clip is of poor quality, while the other "
     "clips are not specified as such.",
     "Based on the description, the most suitable classname for the audio clips would be \"snoring\" or \"zombie "
     "growling and snarling\". Both of these classnames match the description of loud sounds with a strong emotional "
     "impact, specifically fear and terror. But \"zombie growling and snarling\" is not in the given classname set. "
     "So the answer is \"snoring\"",
     "snoring"},
};

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

struct ParsedUrl {
    std::string scheme_host_port;
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw invalid_argument("malformed LLM endpoint URL \"" + url + "\"");
    std::string path = m[2].matched ? m[2].str() : std::string();
    if (path.empty() || path == "/") path = "/v1/chat/completions";
    return {m[1].str(), path};
}

/// Strips markdown emphasis, quotes and trailing punctuation around an answer.
std::string clean_answer(std::string s) {
    s = text::trim(s);
    auto strip_chars = [](std::string& str, std::string_view chars) {
        while (!str.empty() && chars.find(str.front()) != std::string_view::npos) str.erase(str.begin());
        while (!str.empty() && chars.find(str.back()) != std::string_view::npos) str.pop_back();
    };
    strip_chars(s, " \t*_\"'`.:;,!");
    return text::trim(s);
}

bool contains_word_bounded(const std::string& haystack, const std::string& needle) {
    if (needle.empty()) return false;
    std::size_t pos = haystack.find(needle);
    while (pos != std::string::npos) {
        const bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(haystack[pos - 1]));
        const std::size_t end = pos + needle.size();
        const bool right = end >= haystack.size() || !std::isalnum(static_cast<unsigned char>(haystack[end]));
        if (left && right) return true;
        pos = haystack.find(needle, pos + 1);
    }
    return false;
}

std::optional<std::size_t> longest_concept_in(const std::string& text_in, const ConceptSet& concepts) {
    const std::string hay = normalize_concept(text_in);
    std::optional<std::size_t> best;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        const auto c = normalize_concept(concepts[i]);
        if (c.size() > best_len && contains_word_bounded(hay, c)) {
            best = i;
            best_len = c.size();
        }
    }
    return best;
}

}  // namespace

std::string to_string(LlmMode m) {
    switch (m) {
        case LlmMode::live: return "live";
        case LlmMode::replay: return "replay";
        case LlmMode::mock: return "mock";
    }
    return "replay";
}

LlmMode parse_llm_mode(const std::string& s) {
    if (s == "live") return LlmMode::live;
    if (s == "replay") return LlmMode::replay;
    if (s == "mock") return LlmMode::mock;
    throw invalid_argument("unknown LLM mode \"" + s + "\"");
}

std::string to_string(IclMatch m) {
    switch (m) {
        case IclMatch::exact: return "exact";
        case IclMatch::substring: return "substring";
        case IclMatch::nearest: return "nearest";
    }
    return "exact";
}

std::string completion_key(const std::string& model_id, const std::string& prompt) {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw Error("internal", "EVP_MD_CTX_new failed");
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    const char sep = '\0';
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, model_id.data(), model_id.size()) == 1 &&
                    EVP_DigestUpdate(ctx, &sep, 1) == 1 && EVP_DigestUpdate(ctx, prompt.data(), prompt.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw Error("internal", "SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

// ---------------------------------------------------------------------------

CompletionCache::CompletionCache(fs::path path) : path_(std::move(path)) {
    std::ifstream in(*path_);
    if (!in) return;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            CompletionRecord r{j.at("key").get<std::string>(), j.at("prompt").get<std::string>(),
                               j.at("completion").get<std::string>(), j.value("timestamp", std::string())};
            index_.emplace(r.key, records_.size());  // first record for a key wins
            records_.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw format_error(path_->string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::optional<std::string> CompletionCache::lookup(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return records_[it->second].completion;
}

void CompletionCache::append(CompletionRecord record) {
    std::lock_guard lock(mu_);
    if (index_.contains(record.key)) return;
    if (path_) {
        std::ofstream out(*path_, std::ios::app);
        if (!out) throw io_error("cannot append to cache " + path_->string());
        out << json{{"key", record.key}, {"prompt", record.prompt}, {"completion", record.completion},
                    {"timestamp", record.timestamp}}
                   .dump()
            << '\n';
    }
    index_.emplace(record.key, records_.size());
    records_.push_back(std::move(record));
}

std::size_t CompletionCache::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

std::vector<CompletionRecord> CompletionCache::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

// ---------------------------------------------------------------------------

std::string chat_request_body(const LlmConfig& config, const std::string& prompt) {
    const json body = {{"model", config.model_id},
                       {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                       {"temperature", config.temperature},
                       {"max_tokens", config.max_tokens}};
    return body.dump();
}

std::string parse_chat_response(const std::string& body) {
    try {
        const json j = json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw Error("network", std::string("malformed chat-completions response: ") + e.what());
    }
}

std::string HttpTransport::send(const LlmConfig& config, const std::string& prompt) {
    const auto url = parse_url(config.endpoint_url);
    httplib::Client client(url.scheme_host_port);
    client.set_connection_timeout(10);
    client.set_read_timeout(300);
    httplib::Headers headers;
    if (const char* token = std::getenv("AND_LLM_TOKEN"); token && *token)
        headers.emplace("Authorization", std::string("Bearer ") + token);
    auto res = client.Post(url.path, headers, chat_request_body(config, prompt), "application/json");
    if (!res) throw Error("network", "request to " + config.endpoint_url + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw Error("network", "endpoint " + config.endpoint_url + " returned HTTP " + std::to_string(res->status));
    return parse_chat_response(res->body);
}

std::string mock_reply(const std::string& prompt) {
    if (prompt.starts_with(kSummarizeInstruction)) {
        std::string out;
        int n = 0;
        for (const auto& line : text::split_lines(prompt.substr(kSummarizeInstruction.size()))) {
            static const std::regex item(R"(^\s*\d+\.\s+(.*)$)");
            std::smatch m;
            if (std::regex_match(line, m, item)) out += std::to_string(++n) + ". " + m[1].str() + "\n";
        }
        return out.empty() ? "1. No descriptions were provided.\n" : out;
    }
    if (prompt.starts_with(kIclHeader)) {
        const auto lines = text::split_lines(prompt);
        const std::string first = lines.size() > 1 ? text::trim(lines[1].substr(0, lines[1].find(", "))) : "";
        return "Answer: " + first;
    }
    if (prompt.find(kAdjectiveQuestion) != std::string::npos) return "Yes.";
    return "Mock reply.";
}

// ---------------------------------------------------------------------------

LlmClient::LlmClient(LlmConfig config, std::shared_ptr<CompletionCache> cache, std::shared_ptr<LlmTransport> transport)
    : config_(std::move(config)),
      cache_(cache ? std::move(cache) : std::make_shared<CompletionCache>()),
      transport_(std::move(transport)),
      in_flight_(std::make_unique<std::counting_semaphore<>>(std::max(1, config_.max_in_flight))) {
    if (config_.temperature < 0.0) throw invalid_argument("temperature must be >= 0");
}

std::string LlmClient::complete(const std::string& prompt) {
    if (prompt.empty()) throw invalid_argument("empty prompt");
    if (config_.mode == LlmMode::mock) return mock_reply(prompt);

    const auto key = completion_key(config_.model_id, prompt);
    if (auto hit = cache_->lookup(key)) return *hit;
    if (config_.mode == LlmMode::replay)
        throw Error("cache_miss", "replay cache miss for key " + key.substr(0, 12));

    if (!transport_) throw Error("network", "no transport configured for live mode");
    std::string completion;
    for (int attempt = 0;; ++attempt) {
        try {
            in_flight_->acquire();
            struct Release {
                std::counting_semaphore<>* s;
                ~Release() { s->release(); }
            } release{in_flight_.get()};
            ++transport_calls_;
            completion = transport_->send(config_, prompt);
            break;
        } catch (const Error& e) {
            if (e.kind() != "network" || attempt >= config_.max_retries) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
        }
    }
    cache_->append({key, prompt, completion, utc_timestamp()});
    return completion;
}

bool LlmClient::is_acoustic_adjective(const std::string& word) {
    if (word.empty() || word.find_first_of(" \t\n") != std::string::npos)
        throw invalid_argument("acoustic filter expects a single token, got \"" + word + "\"");
    {
        std::lock_guard lock(memo_mu_);
        if (auto it = adjective_memo_.find(word); it != adjective_memo_.end()) return it->second;
    }
    const auto completion = complete(acoustic_adjective_prompt(word));
    const auto verdict = parse_yes_no(completion);
    if (!verdict) throw Error("parse", "no yes/no answer for adjective \"" + word + "\"");
    std::lock_guard lock(memo_mu_);
    adjective_memo_.emplace(word, *verdict);
    return *verdict;
}

// ---------------------------------------------------------------------------

std::string summarize_prompt(const std::vector<std::string>& descriptions) {
    if (descriptions.empty()) throw invalid_argument("summarize needs at least one description");
    std::string p(kSummarizeInstruction);
    p += '\n';
    for (std::size_t i = 0; i < descriptions.size(); ++i) p += std::to_string(i + 1) + ". " + descriptions[i] + '\n';
    return p;
}

std::string acoustic_adjective_prompt(const std::string& word) {
    return "Adjective: " + word + "\n" + std::string(kAdjectiveQuestion);
}

std::string icl_prompt(const std::string& summary, const ConceptSet& concepts, int shots) {
    if (shots < 1 || shots > 2) throw invalid_argument("ICL supports 1 or 2 shots, got " + std::to_string(shots));
    if (text::trim(summary).empty()) throw invalid_argument("empty summary for ICL");
    std::string p(kIclHeader);
    p += '\n' + text::join(concepts.concepts(), ", ") + "\n\n";
    p += kIclInstruction;
    p += "\n\n";
    for (int i = 0; i < shots; ++i) {
        p += "Description: " + std::string(kShots[i].description) + '\n';
        p += "Response: " + std::string(kShots[i].response) + '\n';
        p += "Answer: " + std::string(kShots[i].answer) + "\n\n";
    }
    p += "Description: " + summary + "\nResponse:";
    return p;
}

std::optional<bool> parse_yes_no(const std::string& completion) {
    for (const auto& tok : text::word_tokens(completion)) {
        if (tok == "yes") return true;
        if (tok == "no") return false;
    }
    return std::nullopt;
}

IclResult parse_icl_answer(const std::string& completion, const ConceptSet& concepts, const TextEmbedder* embedder) {
    std::optional<std::string> answer;
    for (const auto& line : text::split_lines(completion)) {
        std::string l = text::trim(line);
        while (!l.empty() && (l.front() == '*' || l.front() == '#' || l.front() == '-' || l.front() == '_')) l.erase(l.begin());
        if (text::starts_with_ci(l, "answer")) answer = clean_answer(l.substr(6));
    }
    if (answer && !answer->empty()) {
        if (auto idx = concepts.find(*answer)) return {concepts[*idx], IclMatch::exact, *answer};
        if (auto idx = longest_concept_in(*answer, concepts)) return {concepts[*idx], IclMatch::substring, *answer};
    }
    if (auto idx = longest_concept_in(completion, concepts))
        return {concepts[*idx], IclMatch::substring, answer.value_or("")};
    if (answer && !answer->empty() && embedder) {
        const VectorXd a = embedder->embed(*answer);
        std::size_t best = 0;
        double best_cos = -2.0;
        for (std::size_t i = 0; i < concepts.size(); ++i) {
            const double c = cosine_similarity(a, embedder->embed(concepts[i]));
            if (c > best_cos) {
                best_cos = c;
                best = i;
            }
        }
        return {concepts[best], IclMatch::nearest, *answer};
    }
    throw Error("parse", "completion lacks a parsable concept answer");
}

IclResult icl_select_concept(const std::string& summary, const ConceptSet& concepts, int shots, LlmClient& client,
                             const TextEmbedder* embedder) {
    return parse_icl_answer(client.complete(icl_prompt(summary, concepts, shots)), concepts, embedder);
}

}  // namespace netdissect
