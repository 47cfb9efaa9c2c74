#include "netdissect/open_concepts.hpp"

#include "netdissect/dossier.hpp"
#include "netdissect/error.hpp"
#include "netdissect/text.hpp"

#include <algorithm>
#include <array>

namespace netdissect {

namespace detail {
extern const std::string_view kStopWordsData;
extern const std::string_view kLexiconData;
extern const std::string_view kLexiconVersion;
}  // namespace detail

namespace {

const std::set<std::string>& prepositions() {
    static const std::set<std::string> s = {
        "about",  "above",      "across", "after",  "against", "along",   "among",  "around",  "at",
        "before", "behind",     "below",  "beneath", "beside", "between", "beyond", "by",      "despite",
        "down",   "during",     "except", "for",    "from",    "in",      "inside", "into",    "like",
        "near",   "of",         "off",    "on",     "onto",    "out",     "outside", "over",   "past",
        "since",  "through",    "throughout", "to", "toward",  "towards", "under",  "underneath", "until",
        "up",     "upon",       "via",    "with",   "within",  "without"};
    return s;
}

// Determiners, pronouns, conjunctions, and function adverbs.
const std::set<std::string>& other_closed_class() {
    static const std::set<std::string> s = {
        "the",  "a",     "an",    "this",  "that",   "these",  "those", "some",    "any",     "each",   "every",
        "all",  "both",  "either", "neither", "no",  "my",     "your",  "his",     "her",     "its",    "our",
        "their", "it",   "they",  "he",    "she",    "we",     "you",   "i",       "me",      "him",    "them",
        "us",   "who",   "whom",  "whose", "which",  "what",   "and",   "or",      "but",     "nor",    "so",
        "yet",  "if",    "than",  "as",    "because", "while", "although", "though", "whether", "not",  "very",
        "also", "just",  "only",  "then",  "there",  "here",   "how",   "when",    "where",   "why",    "too",
        "many", "much",  "more",  "most",  "few",    "several", "such", "other",   "another", "same",   "own",
        "one",  "two",   "three", "four",  "five",   "first",  "second", "third",  "fourth",  "fifth"};
    return s;
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() > suffix.size() + 1 && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

std::unordered_map<std::string, PosClass> parse_lexicon(std::string_view data) {
    std::unordered_map<std::string, PosClass> lex;
    for (const auto& line : text::split_lines(data)) {
        const auto l = text::trim(line);
        if (l.empty() || l.front() == '#') continue;
        const auto tab = l.find('\t');
        if (tab == std::string::npos) throw format_error("malformed lexicon line \"" + l + "\"");
        lex.emplace(text::to_lower(l.substr(0, tab)), parse_pos_class(text::trim(l.substr(tab + 1))));
    }
    return lex;
}

std::vector<std::vector<TaggedToken>> tag_points(const CalibratedSummary& summary) {
    std::vector<std::vector<TaggedToken>> out;
    out.reserve(summary.points.size());
    for (const auto& p : summary.points) out.push_back(pos_tag(p));
    return out;
}

}  // namespace

std::string to_string(PosClass p) {
    switch (p) {
        case PosClass::noun: return "noun";
        case PosClass::verb: return "verb";
        case PosClass::adjective: return "adjective";
        case PosClass::preposition: return "preposition";
        case PosClass::other: return "other";
    }
    return "other";
}

PosClass parse_pos_class(const std::string& s) {
    if (s == "noun" || s == "nouns") return PosClass::noun;
    if (s == "verb" || s == "verbs") return PosClass::verb;
    if (s == "adjective" || s == "adjectives" || s == "adj") return PosClass::adjective;
    if (s == "preposition" || s == "prepositions") return PosClass::preposition;
    if (s == "other") return PosClass::other;
    throw invalid_argument("unknown part of speech \"" + s + "\"");
}

const PosTagger& PosTagger::builtin() {
    static const PosTagger tagger(parse_lexicon(detail::kLexiconData));
    return tagger;
}

PosTagger::PosTagger(std::unordered_map<std::string, PosClass> lexicon) : lexicon_(std::move(lexicon)) {}

PosClass PosTagger::tag_word(const std::string& w) const {
    if (prepositions().contains(w)) return PosClass::preposition;
    if (other_closed_class().contains(w)) return PosClass::other;
    if (auto it = lexicon_.find(w); it != lexicon_.end()) return it->second;

    if (std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c) || c == '.' || c == ','; }))
        return PosClass::other;
    if (ends_with(w, "ly")) return PosClass::other;  // adverbs
    for (std::string_view s : {"ity", "ness", "ment", "tion", "sion", "ence", "ance"})
        if (ends_with(w, s)) return PosClass::noun;
    if (ends_with(w, "ing") || ends_with(w, "ed")) return w.find('-') != std::string::npos ? PosClass::adjective : PosClass::verb;
    if (w.find('-') != std::string::npos) return PosClass::adjective;  // compounds: "low-frequency"
    for (std::string_view s : {"ous", "ive", "ful", "less", "ish"})
        if (ends_with(w, s)) return PosClass::adjective;
    if (ends_with(w, "y") && !is_vowel(w[w.size() - 2])) return PosClass::adjective;
    return PosClass::noun;
}

std::vector<TaggedToken> PosTagger::tag(std::string_view sentence) const {
    std::vector<TaggedToken> out;
    for (auto& surface : text::word_tokens_preserve_case(sentence)) {
        auto lemma = text::to_lower(surface);
        const auto pos = tag_word(lemma);
        out.push_back({std::move(surface), std::move(lemma), pos});
    }
    return out;
}

std::vector<TaggedToken> pos_tag(std::string_view sentence) { return PosTagger::builtin().tag(sentence); }

std::string_view lexicon_version() { return detail::kLexiconVersion; }

const std::set<std::string>& stop_words() {
    static const std::set<std::string> words = [] {
        std::set<std::string> s;
        for (const auto& line : text::split_lines(detail::kStopWordsData)) {
            const auto l = text::trim(line);
            if (!l.empty() && l.front() != '#') s.insert(text::to_lower(l));
        }
        return s;
    }();
    return words;
}

bool is_stop_word(const std::string& lemma) { return stop_words().contains(lemma); }

const std::set<std::string>& basic_adjectives() {
    static const std::set<std::string> s = {"high-pitched", "high-quality", "clear", "loud"};
    return s;
}

OpenConceptSet extract_open_concepts(const std::vector<std::vector<TaggedToken>>& tagged_points, PosClass pos_class,
                                     LlmClient* client, std::string neuron_id) {
    if (pos_class == PosClass::adjective && !client)
        throw invalid_argument("adjective extraction requires an LLM client for acoustic filtering");
    std::set<std::string> candidates;
    for (const auto& point : tagged_points)
        for (const auto& tok : point)
            if (tok.pos == pos_class && !tok.lemma.empty() && !is_stop_word(tok.lemma)) candidates.insert(tok.lemma);

    OpenConceptSet out{std::move(neuron_id), {}, pos_class};
    for (const auto& w : candidates)
        if (pos_class != PosClass::adjective || client->is_acoustic_adjective(w)) out.words.insert(w);
    return out;
}

OpenConceptSet extract_open_concepts(const CalibratedSummary& summary, PosClass pos_class, LlmClient* client,
                                     std::string neuron_id) {
    return extract_open_concepts(tag_points(summary), pos_class, client, std::move(neuron_id));
}

PosCounts count_pos(const CalibratedSummary& summary, const std::set<std::string>& accepted_adjectives) {
    PosCounts c;
    std::map<PosClass, std::set<std::string>> lemmas;
    for (const auto& point : tag_points(summary)) {
        for (const auto& tok : point) {
            ++c.summary_length;
            ++c.tokens[tok.pos];
            lemmas[tok.pos].insert(tok.lemma);
            if (tok.pos != PosClass::adjective) continue;
            if (basic_adjectives().contains(tok.lemma))
                ++c.basic_adjectives;
            else if (accepted_adjectives.contains(tok.lemma))
                ++c.highlevel_adjectives;
        }
    }
    for (auto p : {PosClass::noun, PosClass::verb, PosClass::adjective, PosClass::preposition, PosClass::other}) {
        c.tokens.try_emplace(p, 0);
        c.unique[p] = static_cast<int>(lemmas[p].size());
    }
    return c;
}

std::vector<std::pair<std::string, int>> adjective_distribution(const std::vector<NeuronDossier>& dossiers,
                                                                std::size_t top_n) {
    std::map<std::string, int> counts;
    for (const auto& d : dossiers)
        for (const auto& w : d.open_set(PosClass::adjective)) ++counts[w];
    std::vector<std::pair<std::string, int>> out(counts.begin(), counts.end());
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (out.size() > top_n) out.resize(top_n);
    return out;
}

std::map<int, double> adjectives_per_block(const std::vector<NeuronDossier>& dossiers) {
    std::map<int, std::pair<double, int>> acc;
    for (const auto& d : dossiers) {
        auto& [sum, n] = acc[d.meta.block_index];
        sum += static_cast<double>(d.open_set(PosClass::adjective).size());
        ++n;
    }
    std::map<int, double> out;
    for (const auto& [block, sn] : acc) out[block] = sn.first / sn.second;
    return out;
}

}  // namespace netdissect
