#pragma once

#include "netdissect/concept_scoring.hpp"
#include "netdissect/corpus.hpp"
#include "netdissect/dossier.hpp"
#include "netdissect/embedding.hpp"
#include "netdissect/interpretability.hpp"
#include "netdissect/llm_client.hpp"

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace netdissect {

/// Resolved settings of a dissection run. Every report embeds to_json() of
/// this struct.
struct DissectConfig {
    std::filesystem::path corpus;
    std::filesystem::path concepts;
    std::filesystem::path activations;
    std::filesystem::path embeddings;  ///< captions (keyed by clip id or caption) and concepts
    std::optional<std::filesystem::path> audio_embeddings;     ///< keyed by clip id; enables TAB
    std::optional<std::filesystem::path> sentence_embeddings;  ///< keyed by sentence text
    std::filesystem::path out;

    int k = 5;
    double t = 0.7;
    int tau = 4;  ///< 0 skips interpretability
    InterpretabilityMode mode = InterpretabilityMode::text_rule;
    SimilarityMethod method = SimilarityMethod::wpmi;
    ScoringParams params;
    int top_n = 3;
    int icl_shots = 2;  ///< 0 skips ICL
    int clusters = 0;   ///< 0 picks k by the elbow rule
    int elbow_max = 15;
    int hashing_dim = 256;
    std::vector<std::string> layers;  ///< empty = every layer
    std::uint64_t seed = 0;
    unsigned threads = 0;
    LlmConfig llm;
    std::optional<std::filesystem::path> cache;
};

nlohmann::json to_json(const DissectConfig& c);

struct DissectInputs {
    ProbeCorpus corpus;
    ConceptSet concepts;
    ActivationMatrix activations;
    MatrixXd caption_emb;  ///< N x d, corpus order
    MatrixXd concept_emb;  ///< M x d, concept order
    std::optional<MatrixXd> audio_emb;
    EmbeddingMatrix concept_rows;  ///< for last-layer cosine and ICL fallback
    std::shared_ptr<const TextEmbedder> sentence_embedder;
};

/// Rows of `emb` for each clip, by id and then by caption text.
MatrixXd caption_rows(const EmbeddingMatrix& emb, const ProbeCorpus& corpus);
/// Rows of `emb` for each concept, by exact then normalized name.
EmbeddingMatrix concept_rows(const EmbeddingMatrix& emb, const ConceptSet& concepts);

/// Lookup over the supplied matrix with a hashed bag-of-words fallback of
/// the same width; the hashed encoder alone when no matrix is given.
std::shared_ptr<const TextEmbedder> make_sentence_embedder(const std::optional<std::filesystem::path>& path,
                                                           int hashing_dim, std::uint64_t seed);

DissectInputs load_dissect_inputs(const DissectConfig& config);

/// Row indices of the activation matrix selected by `layers` (all when empty).
std::vector<std::size_t> selected_neurons(const ActivationMatrix& acts, const std::vector<std::string>& layers);

/// Sentence-pool k-means; k from config.clusters or the elbow rule.
KMeansModel<double> fit_sentence_clusters(const ProbeCorpus& corpus, const TextEmbedder& embedder,
                                          const DissectConfig& config);

/// Modules A, B and C for every selected neuron, in activation-row order.
std::vector<NeuronDossier> run_dissect(const DissectInputs& inputs, const DissectConfig& config, LlmClient& client);

/// Builds the client the config asks for (cache file, transport).
LlmClient make_llm_client(const DissectConfig& config, std::shared_ptr<LlmTransport> transport = nullptr);

}  // namespace netdissect
