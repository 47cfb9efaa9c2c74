#include "doctest.h"

#include "netdissect/embedding.hpp"
#include "netdissect/error.hpp"
#include "netdissect/summarize_calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace netdissect;

namespace {

using Points = std::vector<std::string>;

Summary high(Points p) { return {std::move(p), SummarySide::high, "n#0"}; }
Summary low(Points p) { return {std::move(p), SummarySide::low, "n#0"}; }

/// Lookup embedder over 2-D unit vectors at the given angles (radians).
LookupEmbedder angles(const std::vector<std::pair<std::string, double>>& rows) {
    MatrixXd v(static_cast<Eigen::Index>(rows.size()), 2);
    Points keys;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        v.row(static_cast<Eigen::Index>(i)) << std::cos(rows[i].second), std::sin(rows[i].second);
        keys.push_back(rows[i].first);
    }
    return LookupEmbedder(EmbeddingMatrix(v, keys, true));
}

bool subset(const Points& a, const Points& b) {
    return std::all_of(a.begin(), a.end(), [&](const auto& x) { return std::find(b.begin(), b.end(), x) != b.end(); });
}

}  // namespace

TEST_CASE("boilerplate stripping") {
    CHECK(strip_boilerplate("Sure! Here are the commonalities:\n1. Loud") == "1. Loud");
    CHECK(strip_boilerplate("1. Loud barking\n2. Rain") == "1. Loud barking\n2. Rain");
    CHECK(strip_boilerplate("1. Here is a bell sound") == "1. Here is a bell sound");
    CHECK(strip_boilerplate("Certainly.\nAs an AI, I cannot hear.\n1. Rain\nI hope this helps!") == "1. Rain");
    CHECK(strip_boilerplate("Plain text with no greeting.") == "Plain text with no greeting.");
}

TEST_CASE("point parsing") {
    CHECK(parse_points("Sure! Here are the commonalities... 1. Loud sounds.") == Points{"Loud sounds."});
    CHECK(parse_points("1. Loud sounds.\n2. A dog\n   barks.") == Points{"Loud sounds.", "A dog barks."});
    CHECK(parse_points("- Rain falls.\n- Thunder rolls.") == Points{"Rain falls.", "Thunder rolls."});
    CHECK(parse_points("Rain falls. Dr. Smith listens.") == Points{"Rain falls.", "Dr. Smith listens."});
    CHECK(parse_points("").empty());
}

TEST_CASE("summaries come from the LLM with the protocol prompt") {
    LlmConfig c;
    c.mode = LlmMode::mock;
    LlmClient client(c, nullptr, nullptr);
    const auto s = summarize_descriptions({"A dog barks loudly."}, SummarySide::low, client, "fc1#3");
    CHECK(s.points == Points{"A dog barks loudly."});
    CHECK(s.side == SummarySide::low);
    CHECK(s.neuron_id == "fc1#3");

    auto cache = std::make_shared<CompletionCache>();
    const Points descs = {"A", "B"};
    c.mode = LlmMode::replay;
    cache->append({completion_key(c.model_id, summarize_prompt(descs)), "", "Sure! Here you go.\nI hope this helps!", ""});
    LlmClient empty(c, cache, nullptr);
    CHECK_THROWS_AS(summarize_descriptions(descs, SummarySide::high, empty), Error);
}

TEST_CASE("calibration removes only points strictly above the threshold") {
    const double a69 = std::acos(0.69), a71 = std::acos(0.71);
    const auto emb = angles({{"h_keep", a69}, {"h_drop", a71}, {"h_far", 1.5}, {"l", 0.0}});
    const auto c = calibrate(high({"h_keep", "h_drop", "h_far"}), low({"l"}), emb, 0.7);
    CHECK(c.points == Points{"h_keep", "h_far"});
    REQUIRE(c.removed.size() == 1);
    CHECK(c.removed[0].point == "h_drop");
    CHECK(c.removed[0].match == "l");
    CHECK(c.removed[0].similarity == doctest::Approx(0.71));
}

TEST_CASE("shared sentence in both summaries is removed") {
    const HashingEmbedder emb(128);
    const auto c = calibrate(high({"A dog barks repeatedly.", "There is no background noise.", "The sound is loud."}),
                             low({"Rain falls steadily.", "There is no background noise."}), emb, 0.7);
    CHECK(c.points == Points{"A dog barks repeatedly.", "The sound is loud."});
    REQUIRE(c.removed.size() == 1);
    CHECK(c.removed[0].point == "There is no background noise.");
    CHECK(c.removed[0].similarity == doctest::Approx(1.0));
}

TEST_CASE("calibration properties on random embeddings") {
    std::mt19937 gen(17);
    std::uniform_real_distribution<double> angle(0.0, 3.0);
    const std::vector<double> ts = {0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::pair<std::string, double>> rows;
        Points hp, lp;
        for (int i = 0; i < 6; ++i) {
            hp.push_back("h" + std::to_string(i));
            rows.emplace_back(hp.back(), angle(gen));
        }
        for (int i = 0; i < 4; ++i) {
            lp.push_back("l" + std::to_string(i));
            rows.emplace_back(lp.back(), angle(gen));
        }
        const auto emb = angles(rows);

        Points prev;
        for (double t : ts) {
            const auto c = calibrate(high(hp), low(lp), emb, t);
            CHECK(c.points.size() + c.removed.size() == hp.size());
            for (const auto& r : c.removed) CHECK(r.similarity > t);
            CHECK(subset(prev, c.points));
            prev = c.points;

            const auto again = calibrate(high(c.points), low(lp), emb, t);
            CHECK(again.points == c.points);
            CHECK(again.removed.empty());

            Points fewer(lp.begin() + 1, lp.end());
            CHECK(subset(c.points, calibrate(high(hp), low(fewer), emb, t).points));
        }
        CHECK(calibrate(high(hp), low({}), emb, 0.7).points == hp);
    }
}

TEST_CASE("calibration errors") {
    const auto emb = angles({{"a", 0.0}});
    CHECK_THROWS_AS(calibrate(high({"a"}), low({"missing"}), emb, 0.7), Error);
    CHECK_THROWS_AS(calibrate(high({"a"}), low({"a"}), emb, 0.0), Error);
    CHECK_THROWS_AS(calibrate(high({"a"}), low({"a"}), emb, 1.5), Error);
}
