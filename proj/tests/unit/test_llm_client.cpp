#include "doctest.h"
#include "helpers.hpp"

#include "netdissect/error.hpp"
#include "netdissect/llm_client.hpp"

#include "httplib.h"
#include "json.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace netdissect;
using nlohmann::json;

namespace {

struct CountingTransport final : LlmTransport {
    std::atomic<int> calls{0};
    std::string reply;
    explicit CountingTransport(std::string r) : reply(std::move(r)) {}
    std::string send(const LlmConfig&, const std::string&) override {
        ++calls;
        return reply;
    }
};

LlmConfig config(LlmMode mode) {
    LlmConfig c;
    c.mode = mode;
    c.model_id = "test-model";
    return c;
}

const ConceptSet& esc_like() {
    static const ConceptSet s({"dog", "rooster", "rain", "cat", "snoring", "church bells", "water drops", "siren"});
    return s;
}

}  // namespace

TEST_CASE("completion keys are SHA-256 over model and prompt") {
    const auto k = completion_key("m", "p");
    CHECK(k.size() == 64);
    CHECK(k == completion_key("m", "p"));
    CHECK(k != completion_key("m2", "p"));
    CHECK(completion_key("ab", "c") != completion_key("a", "bc"));
}

TEST_CASE("replay returns the stored completion and misses name the key") {
    auto cache = std::make_shared<CompletionCache>();
    cache->append({completion_key("test-model", "hello"), "hello", "stored reply", "t"});
    LlmClient client(config(LlmMode::replay), cache, nullptr);
    CHECK(client.complete("hello") == "stored reply");
    const auto prefix = completion_key("test-model", "other").substr(0, 12);
    try {
        client.complete("other");
        FAIL("expected a cache miss");
    } catch (const Error& e) {
        CHECK(e.kind() == "cache_miss");
        CHECK(std::string(e.what()).find(prefix) != std::string::npos);
    }
    CHECK(client.transport_calls() == 0);
    CHECK_THROWS_AS(client.complete(""), Error);
}

TEST_CASE("live mode caches so repeats never reach the transport") {
    testing::TempDir dir("live");
    auto transport = std::make_shared<CountingTransport>("fresh");
    {
        LlmClient client(config(LlmMode::live), std::make_shared<CompletionCache>(dir / "cache.jsonl"), transport);
        CHECK(client.complete("q") == "fresh");
        CHECK(client.complete("q") == "fresh");
        CHECK(transport->calls == 1);
        CHECK(client.transport_calls() == 1);
    }
    // The JSON-lines file serves a later replay session.
    LlmClient replay(config(LlmMode::replay), std::make_shared<CompletionCache>(dir / "cache.jsonl"), nullptr);
    CHECK(replay.complete("q") == "fresh");
    CHECK(replay.cache().size() == 1);
}

TEST_CASE("network failures are retried a bounded number of times") {
    struct Flaky final : LlmTransport {
        int calls = 0;
        std::string send(const LlmConfig&, const std::string&) override {
            if (++calls < 3) throw Error("network", "down");
            return "ok";
        }
    };
    auto flaky = std::make_shared<Flaky>();
    LlmConfig c = config(LlmMode::live);
    c.max_retries = 3;
    LlmClient client(c, nullptr, flaky);
    CHECK(client.complete("x") == "ok");
    CHECK(flaky->calls == 3);

    struct Dead final : LlmTransport {
        std::string send(const LlmConfig&, const std::string&) override { throw Error("network", "down"); }
    };
    c.max_retries = 1;
    LlmClient dead(c, nullptr, std::make_shared<Dead>());
    CHECK_THROWS_WITH_AS(dead.complete("x"), doctest::Contains("down"), Error);
}

TEST_CASE("acoustic adjective verdicts are memoized") {
    auto transport = std::make_shared<CountingTransport>("Yes, loudness is an acoustic feature.");
    LlmClient client(config(LlmMode::live), nullptr, transport);
    CHECK(client.is_acoustic_adjective("loud"));
    CHECK(client.is_acoustic_adjective("loud"));
    CHECK(transport->calls == 1);
}

TEST_CASE("acoustic adjective verdicts from seeded replay records") {
    auto cache = std::make_shared<CompletionCache>();
    cache->append({completion_key("test-model", acoustic_adjective_prompt("loud")), "", "Yes, loudness is a feature.", ""});
    cache->append({completion_key("test-model", acoustic_adjective_prompt("running")), "",
                   "No, running describes motion rather than sound.", ""});
    cache->append({completion_key("test-model", acoustic_adjective_prompt("odd")), "", "Maybe.", ""});
    LlmClient client(config(LlmMode::replay), cache, nullptr);
    CHECK(client.is_acoustic_adjective("loud"));
    CHECK_FALSE(client.is_acoustic_adjective("running"));
    CHECK_THROWS_AS(client.is_acoustic_adjective("odd"), Error);
    CHECK_THROWS_AS(client.is_acoustic_adjective("two words"), Error);
}

TEST_CASE("yes/no parsing takes the first verdict token") {
    CHECK(parse_yes_no("Yes. It is.") == true);
    CHECK(parse_yes_no("no, but yes in some cases") == false);
    CHECK_FALSE(parse_yes_no("Perhaps").has_value());
    CHECK_FALSE(parse_yes_no("Yesterday it was noisy").has_value());
}

TEST_CASE("prompts carry the protocol text") {
    const auto s = summarize_prompt({"A dog barks.", "Rain falls."});
    CHECK(s.find("Please summarize these descriptions by identifying their commonalities.") != std::string::npos);
    CHECK(s.find("1. A dog barks.\n2. Rain falls.") != std::string::npos);
    CHECK(acoustic_adjective_prompt("loud").find("Answer yes or no and give the reason.") != std::string::npos);

    const auto one = icl_prompt("Dogs bark.", esc_like(), 1);
    const auto two = icl_prompt("Dogs bark.", esc_like(), 2);
    CHECK(one.find("Answer: cat") != std::string::npos);
    CHECK(one.find("Answer: snoring") == std::string::npos);
    CHECK(two.find("Answer: snoring") != std::string::npos);
    CHECK(two.find("matches the description most") != std::string::npos);
    CHECK(two.ends_with("Description: Dogs bark.\nResponse:"));
    CHECK_THROWS_AS(icl_prompt("x", esc_like(), 3), Error);
    CHECK_THROWS_AS(icl_prompt("  ", esc_like(), 1), Error);
}

TEST_CASE("ICL answers for the two exemplar descriptions") {
    const std::string cat_desc =
        "The audio features a car meowing: All of the clips contain the sound of a cat meowing. Loud sound: These "
        "clips are all of loud sound but with varying degrees of intensity.";
    const std::string snore_desc =
        "They all feature a person snoring loudly. The snoring starts off slow and gets louder over time.";
    auto cache = std::make_shared<CompletionCache>();
    cache->append({completion_key("test-model", icl_prompt(cat_desc, esc_like(), 2)), "",
                   " We know these clips are about the class \"cat\" in the concept set.\nAnswer: cat", ""});
    cache->append({completion_key("test-model", icl_prompt(snore_desc, esc_like(), 1)), "",
                   " The description mentions a person snoring.\nAnswer: Snoring.", ""});
    LlmClient client(config(LlmMode::replay), cache, nullptr);
    auto r = icl_select_concept(cat_desc, esc_like(), 2, client);
    CHECK(r.concept_name == "cat");
    CHECK(r.match == IclMatch::exact);
    r = icl_select_concept(snore_desc, esc_like(), 1, client);
    CHECK(r.concept_name == "snoring");
    CHECK(r.match == IclMatch::exact);
}

TEST_CASE("ICL answer parsing fallbacks") {
    CHECK(parse_icl_answer("Answer: dog\nAnswer: rain", esc_like()).concept_name == "rain");
    auto r = parse_icl_answer("Answer: heavy rain outside", esc_like());
    CHECK(r.concept_name == "rain");
    CHECK(r.match == IclMatch::substring);
    r = parse_icl_answer("It sounds like church bells, maybe a bell tower.", esc_like());
    CHECK(r.concept_name == "church bells");
    CHECK_THROWS_AS(parse_icl_answer("Answer: thunderstorm", esc_like()), Error);
    CHECK_THROWS_AS(parse_icl_answer("no idea", esc_like()), Error);

    struct Toy final : TextEmbedder {
        Eigen::Index dim() const override { return 2; }
        VectorXd embed(const std::string& t) const override {
            VectorXd v(2);
            v << (t == "thunderstorm" || t == "rain" ? 1.0 : 0.0), 0.1;
            return v;
        }
    } toy;
    r = parse_icl_answer("Answer: thunderstorm", esc_like(), &toy);
    CHECK(r.concept_name == "rain");
    CHECK(r.match == IclMatch::nearest);
}

TEST_CASE("mock mode echoes the first concept") {
    LlmClient client(config(LlmMode::mock), nullptr, nullptr);
    const auto r = icl_select_concept("anything", esc_like(), 2, client);
    CHECK(r.concept_name == "dog");
    CHECK(r.match == IclMatch::exact);
    CHECK(client.is_acoustic_adjective("loud"));
}

TEST_CASE("chat request and response JSON") {
    LlmConfig c = config(LlmMode::live);
    c.max_tokens = 77;
    const json body = json::parse(chat_request_body(c, "hi"));
    CHECK(body["model"] == "test-model");
    CHECK(body["temperature"] == 0.0);
    CHECK(body["max_tokens"] == 77);
    CHECK(body["messages"][0]["role"] == "user");
    CHECK(body["messages"][0]["content"] == "hi");
    CHECK(parse_chat_response(R"({"choices":[{"message":{"role":"assistant","content":"hello"}}]})") == "hello");
    CHECK_THROWS_AS(parse_chat_response("{}"), Error);
    CHECK_THROWS_AS(parse_chat_response("not json"), Error);
}

TEST_CASE("HTTP transport against a local chat server") {
    httplib::Server server;
    std::string auth, seen_prompt;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        seen_prompt = json::parse(req.body)["messages"][0]["content"];
        json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "pong: " + seen_prompt}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("AND_LLM_TOKEN", "secret", 1);
    LlmConfig c = config(LlmMode::live);
    c.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    HttpTransport http;
    CHECK(http.send(c, "ping") == "pong: ping");
    CHECK(auth == "Bearer secret");
    ::unsetenv("AND_LLM_TOKEN");

    c.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/broken";
    c.max_retries = 0;
    LlmClient client(c, nullptr, std::make_shared<HttpTransport>());
    CHECK_THROWS_WITH_AS(client.complete("x"), doctest::Contains("500"), Error);

    server.stop();
    worker.join();
}
