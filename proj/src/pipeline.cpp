#include "netdissect/pipeline.hpp"

#include "netdissect/activation_select.hpp"
#include "netdissect/error.hpp"
#include "netdissect/open_concepts.hpp"
#include "netdissect/parallel.hpp"
#include "netdissect/summarize_calibrate.hpp"
#include "netdissect/text.hpp"

#include <algorithm>
#include <set>

namespace netdissect {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json opt_path(const std::optional<fs::path>& p) { return p ? json(p->generic_string()) : json(nullptr); }

}  // namespace

json to_json(const DissectConfig& c) {
    json params = {{"gamma", c.params.gamma}, {"lambda", c.params.lambda}};
    params["soft_temp"] = c.params.soft_temp ? json(*c.params.soft_temp) : json(nullptr);
    params["rank_pool"] = c.params.rank_pool ? json(*c.params.rank_pool) : json(nullptr);
    return {{"corpus", c.corpus.generic_string()},
            {"concepts", c.concepts.generic_string()},
            {"activations", c.activations.generic_string()},
            {"embeddings", c.embeddings.generic_string()},
            {"audio_embeddings", opt_path(c.audio_embeddings)},
            {"sentence_embeddings", opt_path(c.sentence_embeddings)},
            {"K", c.k},
            {"t", c.t},
            {"tau", c.tau},
            {"mode", to_string(c.mode)},
            {"method", to_string(c.method)},
            {"params", params},
            {"top_n", c.top_n},
            {"icl_shots", c.icl_shots},
            {"clusters", c.clusters},
            {"elbow_max", c.elbow_max},
            {"hashing_dim", c.hashing_dim},
            {"layers", c.layers},
            {"seed", c.seed},
            {"llm",
             {{"mode", to_string(c.llm.mode)},
              {"endpoint_url", c.llm.endpoint_url},
              {"model_id", c.llm.model_id},
              {"temperature", c.llm.temperature},
              {"max_tokens", c.llm.max_tokens}}},
            {"cache", opt_path(c.cache)}};
}

MatrixXd caption_rows(const EmbeddingMatrix& emb, const ProbeCorpus& corpus) {
    MatrixXd out(static_cast<Eigen::Index>(corpus.size()), emb.dim());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& clip = corpus.clip(i);
        auto row = emb.find(clip.id);
        if (!row) row = emb.find(clip.caption);
        if (!row) throw format_error("no embedding row for clip \"" + clip.id + "\"");
        out.row(static_cast<Eigen::Index>(i)) = emb.values().row(*row);
    }
    return out;
}

EmbeddingMatrix concept_rows(const EmbeddingMatrix& emb, const ConceptSet& concepts) {
    std::unordered_map<std::string, Eigen::Index> normalized;
    for (Eigen::Index r = 0; r < emb.rows(); ++r)
        normalized.emplace(normalize_concept(emb.row_keys()[static_cast<std::size_t>(r)]), r);
    MatrixXd values(static_cast<Eigen::Index>(concepts.size()), emb.dim());
    for (std::size_t m = 0; m < concepts.size(); ++m) {
        auto row = emb.find(concepts[m]);
        if (!row) {
            auto it = normalized.find(normalize_concept(concepts[m]));
            if (it != normalized.end()) row = it->second;
        }
        if (!row) throw format_error("no embedding row for concept \"" + concepts[m] + "\"");
        values.row(static_cast<Eigen::Index>(m)) = emb.values().row(*row);
    }
    return EmbeddingMatrix(values, concepts.concepts(), false);
}

std::shared_ptr<const TextEmbedder> make_sentence_embedder(const std::optional<fs::path>& path, int hashing_dim,
                                                           std::uint64_t seed) {
    if (!path) return std::make_shared<HashingEmbedder>(hashing_dim, seed);
    EmbeddingMatrix m = load_embeddings(*path);
    auto fallback = std::make_shared<HashingEmbedder>(m.dim(), seed);
    return std::make_shared<LookupEmbedder>(std::move(m), std::move(fallback));
}

DissectInputs load_dissect_inputs(const DissectConfig& config) {
    DissectInputs in;
    in.corpus = load_corpus(config.corpus);
    in.concepts = load_concepts(config.concepts);
    in.activations = load_activations(config.activations);
    in.activations.validate(in.corpus.size());
    const EmbeddingMatrix text = load_embeddings(config.embeddings);
    in.caption_emb = caption_rows(text, in.corpus);
    in.concept_rows = concept_rows(text, in.concepts);
    in.concept_emb = in.concept_rows.values();
    if (config.audio_embeddings) {
        const EmbeddingMatrix audio = load_embeddings(*config.audio_embeddings);
        if (audio.dim() != text.dim())
            throw format_error("audio embedding width " + std::to_string(audio.dim()) + " != text embedding width " +
                               std::to_string(text.dim()));
        in.audio_emb = caption_rows(audio, in.corpus);
    }
    in.sentence_embedder = make_sentence_embedder(config.sentence_embeddings, config.hashing_dim, config.seed);
    return in;
}

std::vector<std::size_t> selected_neurons(const ActivationMatrix& acts, const std::vector<std::string>& layers) {
    std::set<std::string> want(layers.begin(), layers.end());
    std::vector<std::size_t> rows;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < acts.neurons.size(); ++i) {
        seen.insert(acts.neurons[i].layer_name);
        if (want.empty() || want.contains(acts.neurons[i].layer_name)) rows.push_back(i);
    }
    for (const auto& l : want)
        if (!seen.contains(l)) throw invalid_argument("no neurons in layer '" + l + "'");
    return rows;
}

KMeansModel<double> fit_sentence_clusters(const ProbeCorpus& corpus, const TextEmbedder& embedder,
                                          const DissectConfig& config) {
    const SentencePool pool = build_sentence_pool(corpus, embedder);
    const int rows = static_cast<int>(pool.embeddings.rows());
    int k = config.clusters;
    if (k <= 0) {
        const int k_max = std::min(config.elbow_max, rows);
        if (k_max < 3) throw invalid_argument("sentence pool too small for the elbow rule; pass an explicit cluster count");
        k = elbow_select_k(pool.embeddings, 1, k_max, config.seed).k;
    }
    return fit_kmeans(pool.embeddings, k, config.seed);
}

LlmClient make_llm_client(const DissectConfig& config, std::shared_ptr<LlmTransport> transport) {
    auto cache = config.cache ? std::make_shared<CompletionCache>(*config.cache) : std::make_shared<CompletionCache>();
    if (!transport) transport = std::make_shared<HttpTransport>();
    return LlmClient(config.llm, std::move(cache), std::move(transport));
}

std::vector<NeuronDossier> run_dissect(const DissectInputs& in, const DissectConfig& config, LlmClient& client) {
    config.params.validate();
    if (config.k < 1 || static_cast<std::size_t>(config.k) > in.corpus.size())
        throw invalid_argument("K must be within [1, N]");
    if (!(config.t > 0.0 && config.t <= 1.0)) throw invalid_argument("t must be within (0, 1]");
    if (config.top_n < 1 || static_cast<std::size_t>(config.top_n) > in.concepts.size())
        throw invalid_argument("top_n must be within [1, M]");

    const ConceptScorer<double> db(build_concept_activation_matrix(in.caption_emb, in.concept_emb, ConceptSource::DB),
                                   config.params);
    std::optional<ConceptScorer<double>> tab;
    if (in.audio_emb)
        tab.emplace(build_concept_activation_matrix(*in.audio_emb, in.concept_emb, ConceptSource::TAB), config.params);

    std::optional<KMeansModel<double>> clusters;
    if (config.tau > 0) clusters = fit_sentence_clusters(in.corpus, *in.sentence_embedder, config);

    const auto rows = selected_neurons(in.activations, config.layers);
    std::vector<NeuronDossier> out(rows.size());
    parallel_for(
        rows.size(),
        [&](std::size_t r) {
            const auto row = rows[r];
            NeuronDossier& d = out[r];
            d.meta = in.activations.neurons[row];
            d.neuron_id = d.meta.id();
            const VectorXd u = in.activations.values.row(static_cast<Eigen::Index>(row)).transpose();
            d.selection = select_extremes(u, config.k, d.neuron_id);

            std::vector<std::string> high, low;
            for (auto i : d.selection.high_indices) {
                d.high_clip_ids.push_back(in.corpus.clip(i).id);
                high.push_back(in.corpus.clip(i).caption);
            }
            for (auto i : d.selection.low_indices) {
                d.low_clip_ids.push_back(in.corpus.clip(i).id);
                low.push_back(in.corpus.clip(i).caption);
            }

            d.closed_db = identify_closed_concept(db.score(u, config.method, config.k), in.concepts, config.top_n,
                                                  d.neuron_id, config.method, ConceptSource::DB);
            if (tab)
                d.closed_tab = identify_closed_concept(tab->score(u, config.method, config.k), in.concepts,
                                                       config.top_n, d.neuron_id, config.method, ConceptSource::TAB);

            d.summary_high = summarize_descriptions(high, SummarySide::high, client, d.neuron_id);
            d.summary_low = summarize_descriptions(low, SummarySide::low, client, d.neuron_id);
            d.calibrated = calibrate(d.summary_high, d.summary_low, *in.sentence_embedder, config.t);

            if (config.icl_shots > 0 && !d.calibrated.points.empty())
                d.closed_icl = icl_select_concept(text::join(d.calibrated.points, " "), in.concepts, config.icl_shots,
                                                  client, in.sentence_embedder.get());

            for (auto p : {PosClass::noun, PosClass::verb, PosClass::adjective})
                d.open_sets[p] = extract_open_concepts(d.calibrated, p, &client, d.neuron_id).words;
            d.pos_counts = count_pos(d.calibrated, d.open_sets[PosClass::adjective]);

            if (clusters) d.label = classify_neuron(high, *clusters, *in.sentence_embedder, config.tau, config.mode, d.neuron_id);
        },
        config.threads);
    return out;
}

}  // namespace netdissect
