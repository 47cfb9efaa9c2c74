#include "doctest.h"

#include "netdissect/dossier.hpp"
#include "netdissect/error.hpp"
#include "netdissect/open_concepts.hpp"

#include <algorithm>
#include <random>

using namespace netdissect;

namespace {

using Words = std::set<std::string>;

std::vector<std::pair<std::string, PosClass>> tags(std::string_view s) {
    std::vector<std::pair<std::string, PosClass>> out;
    for (const auto& t : pos_tag(s)) out.emplace_back(t.lemma, t.pos);
    return out;
}

/// Replay client with acoustic verdicts for the given words.
LlmClient verdict_client(const std::map<std::string, bool>& verdicts) {
    LlmConfig c;
    c.mode = LlmMode::replay;
    auto cache = std::make_shared<CompletionCache>();
    for (const auto& [w, yes] : verdicts)
        cache->append({completion_key(c.model_id, acoustic_adjective_prompt(w)), "",
                       yes ? "Yes, it describes sound." : "No, it is unrelated to sound.", ""});
    return LlmClient(c, cache, nullptr);
}

NeuronDossier with_adjectives(int block, int unit, Words adj) {
    NeuronDossier d;
    d.meta = {"blk" + std::to_string(block), block, unit};
    d.neuron_id = d.meta.id();
    d.open_sets[PosClass::adjective] = std::move(adj);
    return d;
}

}  // namespace

TEST_CASE("tagger examples") {
    using P = PosClass;
    CHECK(tags("loud repetitive barking") ==
          std::vector<std::pair<std::string, P>>{{"loud", P::adjective}, {"repetitive", P::adjective}, {"barking", P::noun}});
    CHECK(pos_tag("").empty());
    CHECK(tags("in the background") ==
          std::vector<std::pair<std::string, P>>{{"in", P::preposition}, {"the", P::other}, {"background", P::noun}});
}

TEST_CASE("tagger suffix heuristics and surface forms") {
    const auto t = pos_tag("Dogs were howling; a melodious, peaceful hum echoed.");
    std::map<std::string, PosClass> by;
    for (const auto& x : t) by[x.lemma] = x.pos;
    CHECK(by["howling"] == PosClass::verb);
    CHECK(by["echoed"] == PosClass::verb);
    CHECK(by["melodious"] == PosClass::adjective);
    CHECK(by["peaceful"] == PosClass::adjective);
    CHECK(by["dogs"] == PosClass::noun);
    CHECK(t.front().surface == "Dogs");
    CHECK(t.front().lemma == "dogs");
    CHECK(pos_tag("A B C") == pos_tag("A B C"));
}

TEST_CASE("stop words and basic adjectives") {
    CHECK(is_stop_word("the"));
    CHECK(is_stop_word("and"));
    CHECK_FALSE(is_stop_word("dog"));
    CHECK(stop_words().size() >= 100);
    CHECK(basic_adjectives() == Words{"clear", "high-pitched", "high-quality", "loud"});
    CHECK(lexicon_version() == "v1");
}

TEST_CASE("acoustic filter keeps only confirmed adjectives") {
    auto client = verdict_client({{"loud", true}, {"clear", true}, {"running", false}});
    CalibratedSummary s{{"Loud and clear sounds.", "The running water."}, {}};
    auto r = extract_open_concepts(s, PosClass::adjective, &client, "n#1");
    CHECK(r.words == Words{"clear", "loud"});
    CHECK(r.neuron_id == "n#1");

    const auto nouns = extract_open_concepts(s, PosClass::noun, nullptr);
    CHECK(nouns.words.contains("water"));
    CHECK(nouns.words.contains("sounds"));
    CHECK_FALSE(nouns.words.contains("the"));

    CHECK(extract_open_concepts(CalibratedSummary{}, PosClass::adjective, &client).words.empty());
    CHECK_THROWS_AS(extract_open_concepts(s, PosClass::adjective, nullptr), Error);

    auto partial = verdict_client({{"loud", true}});
    CHECK_THROWS_AS(extract_open_concepts(s, PosClass::adjective, &partial), Error);
}

TEST_CASE("open concepts do not depend on point order") {
    auto client = verdict_client({{"loud", true}, {"clear", true}, {"sharp", true}, {"running", false}, {"nearby", false}});
    std::vector<std::string> pts = {"Loud and clear sounds.", "A sharp bark.", "Running water nearby.", "Dogs bark."};
    const auto base = extract_open_concepts(CalibratedSummary{pts, {}}, PosClass::adjective, &client).words;
    std::mt19937 gen(2);
    for (int i = 0; i < 10; ++i) {
        std::shuffle(pts.begin(), pts.end(), gen);
        CHECK(extract_open_concepts(CalibratedSummary{pts, {}}, PosClass::adjective, &client).words == base);
        CHECK(extract_open_concepts(CalibratedSummary{pts, {}}, PosClass::verb, nullptr).words ==
              extract_open_concepts(CalibratedSummary{{pts.rbegin(), pts.rend()}, {}}, PosClass::verb, nullptr).words);
    }
}

TEST_CASE("precomputed annotations bypass the tagger") {
    std::vector<std::vector<TaggedToken>> pts = {
        {{"Humming", "humming", PosClass::adjective}, {"bees", "bees", PosClass::noun}}};
    auto client = verdict_client({{"humming", true}});
    CHECK(extract_open_concepts(pts, PosClass::adjective, &client).words == Words{"humming"});
}

TEST_CASE("POS counts are token occurrences with unique lemmas alongside") {
    CalibratedSummary s{{"Loud loud barking in the yard.", "A clear and melodious tone."}, {}};
    const auto c = count_pos(s, {"loud", "clear", "melodious"});
    CHECK(c.tokens.at(PosClass::adjective) == 4);
    CHECK(c.unique.at(PosClass::adjective) == 3);
    CHECK(c.tokens.at(PosClass::preposition) == 1);
    CHECK(c.summary_length == 11);
    CHECK(c.basic_adjectives == 3);
    CHECK(c.highlevel_adjectives == 1);
}

TEST_CASE("adjective distribution") {
    std::vector<NeuronDossier> ds = {with_adjectives(0, 0, {"loud"}), with_adjectives(0, 1, {"loud", "clear"}),
                                     with_adjectives(0, 2, {"clear"})};
    using Dist = std::vector<std::pair<std::string, int>>;
    CHECK(adjective_distribution(ds, 2) == Dist{{"clear", 2}, {"loud", 2}});
    CHECK(adjective_distribution(ds, 1) == Dist{{"clear", 2}});
    CHECK(adjective_distribution({}, 5).empty());
    ds.push_back(with_adjectives(0, 3, {"soft"}));
    CHECK(adjective_distribution(ds, 10) == Dist{{"clear", 2}, {"loud", 2}, {"soft", 1}});
}

TEST_CASE("adjectives per block") {
    std::vector<NeuronDossier> one = {with_adjectives(0, 0, {"a", "b"}), with_adjectives(0, 1, {"a", "b", "c", "d"})};
    CHECK(adjectives_per_block(one) == std::map<int, double>{{0, 3.0}});
    std::vector<NeuronDossier> two = {with_adjectives(0, 0, {"a", "b"}), with_adjectives(1, 0, {})};
    CHECK(adjectives_per_block(two) == std::map<int, double>{{0, 2.0}, {1, 0.0}});

    std::vector<NeuronDossier> many;
    for (int i = 0; i < 12; ++i) {
        Words w;
        for (int j = 0; j < i % 4; ++j) w.insert("w" + std::to_string(j));
        many.push_back(with_adjectives(i % 3, i, w));
    }
    const auto base = adjectives_per_block(many);
    std::mt19937 gen(3);
    std::shuffle(many.begin(), many.end(), gen);
    CHECK(adjectives_per_block(many) == base);
}
