#pragma once

#include "netdissect/corpus.hpp"
#include "netdissect/embedding.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace netdissect {

// ---------------------------------------------------------------------------
// Sentence pool
// ---------------------------------------------------------------------------

struct SentencePool {
    std::vector<std::pair<std::size_t, std::string>> sentences;  ///< (clip index, sentence)
    MatrixXd embeddings;                                          ///< aligned by row
};

/// Every caption sentence of the corpus, in clip order, with embeddings.
SentencePool build_sentence_pool(const ProbeCorpus& corpus, const TextEmbedder& embedder);

// ---------------------------------------------------------------------------
// K-means
// ---------------------------------------------------------------------------

template <typename Scalar>
struct KMeansModel {
    Matrix<Scalar> centroids;  ///< k x dim
    int k = 0;
    std::uint64_t seed = 0;
    Scalar inertia = 0;
    int iterations = 0;
    std::vector<Scalar> inertia_history;  ///< inertia after each assignment step

    /// Nearest centroid by squared Euclidean distance; ties to the lower id.
    int predict(const Eigen::Ref<const Vector<Scalar>>& x) const;
    std::vector<int> predict_rows(const Eigen::Ref<const Matrix<Scalar>>& rows) const;
};

inline constexpr int kDefaultKMeansMaxIter = 300;

/// k-means++ seeding followed by Lloyd iterations until the assignment is
/// a fixpoint or max_iter is hit. An empty cluster is moved onto the point
/// farthest from its current centroid.
template <typename Scalar>
KMeansModel<Scalar> fit_kmeans(const Eigen::Ref<const Matrix<Scalar>>& data, int k, std::uint64_t seed = 0,
                               int max_iter = kDefaultKMeansMaxIter);

inline KMeansModel<double> fit_kmeans(const MatrixXd& data, int k, std::uint64_t seed = 0,
                                      int max_iter = kDefaultKMeansMaxIter) {
    return fit_kmeans<double>(data, k, seed, max_iter);
}

/// Interior k maximizing the discrete second difference of inertia; ties to
/// the smallest k. `ks` must be consecutive and hold at least three values.
int elbow_from_inertia(const std::vector<int>& ks, const std::vector<double>& inertia);

struct ElbowResult {
    int k = 0;
    std::vector<int> ks;
    std::vector<double> inertia;
};

ElbowResult elbow_select_k(const MatrixXd& data, int k_min, int k_max, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Neuron classification
// ---------------------------------------------------------------------------

enum class InterpretabilityMode { text_rule, multiset_rule };

std::string to_string(InterpretabilityMode m);
InterpretabilityMode parse_interpretability_mode(const std::string& s);

struct InterpretabilityLabel {
    std::string neuron_id;
    bool interpretable = false;
    InterpretabilityMode mode = InterpretabilityMode::text_rule;
    int tau = 4;
    /// text_rule: cluster id -> number of descriptions touching it (only the
    /// best cluster is kept). multiset_rule: the intersection multiset.
    std::map<int, int> support;
    std::optional<std::string> warning;
};

/// Core rule over per-description cluster multisets.
///   text_rule:     some cluster occurs in at least tau descriptions
///   multiset_rule: |intersection of all multisets| >= tau
InterpretabilityLabel classify_clusters(const std::vector<std::vector<int>>& description_clusters, int tau,
                                        InterpretabilityMode mode, std::string neuron_id = {});

/// Splits each top-activating caption into sentences and projects them onto
/// the K-means clusters before applying classify_clusters.
InterpretabilityLabel classify_neuron(const std::vector<std::string>& high_descriptions,
                                      const KMeansModel<double>& model, const TextEmbedder& embedder, int tau,
                                      InterpretabilityMode mode, std::string neuron_id = {});

/// block index -> percentage of uninterpretable neurons.
std::map<int, double> block_uninterpretable_fraction(const std::vector<InterpretabilityLabel>& labels,
                                                     const std::vector<NeuronMeta>& neurons);

extern template struct KMeansModel<float>;
extern template struct KMeansModel<double>;

}  // namespace netdissect
