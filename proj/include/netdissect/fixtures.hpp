#pragma once

#include "netdissect/ablation.hpp"
#include "netdissect/dossier.hpp"
#include "netdissect/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace netdissect {

/// Deterministic stand-in for a chat model, used to record the bundled
/// replay cache. Summaries pick the description sentences whose words recur
/// most, wrapped in typical chat boilerplate; acoustic-adjective questions
/// are answered from a fixed word list; ICL picks the concept with the most
/// word overlap.
std::string scripted_llm_reply(const std::string& prompt);

/// Words the scripted model accepts as acoustic adjectives.
const std::vector<std::string>& scripted_acoustic_adjectives();

/// Planted classifier: input = [class indicators..., noise dims...];
/// hidden layer "fc1" has `per_class` concept units per class (driven only
/// by that class's indicator and feeding only that class's logit) followed
/// by `fillers` units that read the noise dims and feed every logit
/// equally; output layer "out".
struct PlantedSpec {
    std::vector<std::string> class_names = {"dog", "rain", "siren"};
    int per_class = 6;
    int fillers = 42;
    int noise_dims = 5;
    double concept_gain = 1.5;  // weight from a concept unit to its logit
    std::uint64_t seed = 7;
};

FeedForwardNet planted_network(const PlantedSpec& spec);

/// Unit index of the j-th concept unit of class c.
int planted_concept_unit(const PlantedSpec& spec, int c, int j);

/// `per_class` samples per class with indicator strength in [0.6, 1.4].
LabeledSet planted_samples(const PlantedSpec& spec, int per_class, std::uint64_t seed);

/// Dossiers for every hidden unit: concept units carry their class word
/// (plus generic words) in the noun open set; fillers carry generic words.
std::vector<NeuronDossier> planted_dossiers(const PlantedSpec& spec);

struct DeskFixture {
    std::filesystem::path dir;
    DissectConfig config;  // replay-mode dissect config over the fixture
    std::filesystem::path net;
    std::filesystem::path testset;
};

/// Paths of a fixture directory written by generate_desk_fixture.
DeskFixture desk_fixture_paths(const std::filesystem::path& dir);

/// Writes the 24-clip desk corpus (captions, WAVs, concepts, activations of
/// the planted network, caption/concept/audio embeddings, network, test set)
/// and records the replay cache by running dissect against the scripted model.
DeskFixture generate_desk_fixture(const std::filesystem::path& dir, std::uint64_t seed = 0);

}  // namespace netdissect
