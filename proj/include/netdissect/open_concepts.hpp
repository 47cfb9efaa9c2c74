#pragma once

#include "netdissect/llm_client.hpp"
#include "netdissect/summarize_calibrate.hpp"

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace netdissect {

struct NeuronDossier;

enum class PosClass { noun, verb, adjective, preposition, other };

std::string to_string(PosClass p);
PosClass parse_pos_class(const std::string& s);

struct TaggedToken {
    std::string surface;
    std::string lemma;  ///< lowercased surface
    PosClass pos = PosClass::other;

    friend bool operator==(const TaggedToken&, const TaggedToken&) = default;
};

/// Lexicon + suffix-heuristic tagger. Resolution order per token:
/// closed-class lists, lexicon entry, suffix rules, default noun.
class PosTagger {
public:
    /// Tagger over the bundled versioned lexicon.
    static const PosTagger& builtin();

    explicit PosTagger(std::unordered_map<std::string, PosClass> lexicon);

    std::vector<TaggedToken> tag(std::string_view sentence) const;
    PosClass tag_word(const std::string& lower) const;

private:
    std::unordered_map<std::string, PosClass> lexicon_;
};

std::vector<TaggedToken> pos_tag(std::string_view sentence);

/// Version tag of the bundled lexicon/stop-word data.
std::string_view lexicon_version();
const std::set<std::string>& stop_words();
bool is_stop_word(const std::string& lemma);

/// The four basic acoustic adjectives; every other adjective is high-level.
const std::set<std::string>& basic_adjectives();

struct OpenConceptSet {
    std::string neuron_id;
    std::set<std::string> words;
    PosClass pos_class = PosClass::adjective;
};

/// Collects lemmas of `pos_class` from every point, drops stop words, and
/// for adjectives keeps only those the LLM accepts as acoustic. `client` is
/// required for adjectives and ignored otherwise.
OpenConceptSet extract_open_concepts(const CalibratedSummary& summary, PosClass pos_class, LlmClient* client,
                                     std::string neuron_id = {});

/// Same, over externally supplied token annotations (one list per point).
OpenConceptSet extract_open_concepts(const std::vector<std::vector<TaggedToken>>& tagged_points, PosClass pos_class,
                                     LlmClient* client, std::string neuron_id = {});

/// Part-of-speech statistics of a calibrated summary.
struct PosCounts {
    std::map<PosClass, int> tokens;  ///< token occurrences per class
    std::map<PosClass, int> unique;  ///< distinct lemmas per class
    int summary_length = 0;          ///< total word tokens
    int basic_adjectives = 0;        ///< occurrences of the basic four
    int highlevel_adjectives = 0;    ///< occurrences of other accepted (open-set) adjectives
};

PosCounts count_pos(const CalibratedSummary& summary, const std::set<std::string>& accepted_adjectives);

/// Per-word count of neurons whose adjective open set contains the word;
/// descending, ties lexicographic; at most top_n entries.
std::vector<std::pair<std::string, int>> adjective_distribution(const std::vector<NeuronDossier>& dossiers,
                                                                std::size_t top_n);

/// block index -> mean adjective open-set size over that block's neurons.
std::map<int, double> adjectives_per_block(const std::vector<NeuronDossier>& dossiers);

}  // namespace netdissect
