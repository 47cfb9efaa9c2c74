#pragma once

#include "netdissect/corpus.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace netdissect {

enum class ConceptSource { DB, TAB };
enum class SimilarityMethod { cos, cos_cubed, rank_reorder, wpmi, soft_wpmi };

std::string to_string(ConceptSource s);
std::string to_string(SimilarityMethod m);
SimilarityMethod parse_similarity_method(const std::string& s);
ConceptSource parse_concept_source(const std::string& s);

/// P[j][m] = <embedding of clip j, embedding of concept m>; N x M.
template <typename Scalar>
struct ConceptActivationMatrix {
    Matrix<Scalar> P;
    ConceptSource source = ConceptSource::DB;
};

struct ScoringParams {
    double gamma = 10.0;                ///< softmax inverse temperature over concepts
    double lambda = 0.6;                ///< WPMI marginal penalty weight
    std::optional<double> soft_temp;    ///< softWPMI membership temperature; std(u) when unset
    std::optional<int> rank_pool;       ///< rank-reorder pool size; K when unset

    void validate() const;
};

struct ConceptAssignment {
    std::string neuron_id;
    std::vector<std::pair<std::string, double>> ranked_concepts;
    SimilarityMethod method = SimilarityMethod::cos;
    ConceptSource source = ConceptSource::DB;
};

/// Rows are inner products of description (DB) or audio (TAB) embeddings with concept embeddings.
template <typename Scalar>
ConceptActivationMatrix<Scalar> build_concept_activation_matrix(const Eigen::Ref<const Matrix<Scalar>>& clip_emb,
                                                                const Eigen::Ref<const Matrix<Scalar>>& concept_emb,
                                                                ConceptSource source = ConceptSource::DB);

/// Caches the u-independent parts of every similarity function (softmax
/// over concepts, marginals, per-column ranks) so a layer of neurons can be
/// scored against one P cheaply. Immutable after construction.
template <typename Scalar>
class ConceptScorer {
public:
    ConceptScorer(ConceptActivationMatrix<Scalar> cam, ScoringParams params);

    Vector<Scalar> score(const Eigen::Ref<const Vector<Scalar>>& u, SimilarityMethod method, int k) const;

    const ConceptActivationMatrix<Scalar>& matrix() const { return cam_; }
    const ScoringParams& params() const { return params_; }
    Eigen::Index num_clips() const { return cam_.P.rows(); }
    Eigen::Index num_concepts() const { return cam_.P.cols(); }

private:
    Vector<Scalar> cosine(const Eigen::Ref<const Vector<Scalar>>& u) const;
    Vector<Scalar> cosine_cubed(const Eigen::Ref<const Vector<Scalar>>& u) const;
    Vector<Scalar> rank_reorder(const Eigen::Ref<const Vector<Scalar>>& u, int k) const;
    Vector<Scalar> wpmi(const Eigen::Ref<const Vector<Scalar>>& u, int k) const;
    Vector<Scalar> soft_wpmi(const Eigen::Ref<const Vector<Scalar>>& u, int k) const;

    ConceptActivationMatrix<Scalar> cam_;
    ScoringParams params_;
    Matrix<Scalar> cond_prob_;      // p(t_m | a_j), N x M
    Matrix<Scalar> log_cond_prob_;  // log of the above
    Vector<Scalar> log_marginal_;   // log p̄(t_m), length M
    Matrix<Scalar> column_rank_;    // 1-based descending rank of P[j][m] within column m
    Matrix<Scalar> cubed_columns_;  // centered-and-cubed columns of P
};

/// One-shot scoring; prefer ConceptScorer when scoring many neurons.
template <typename Scalar>
Vector<Scalar> score_concepts(const Eigen::Ref<const Vector<Scalar>>& u, const ConceptActivationMatrix<Scalar>& cam,
                              SimilarityMethod method, const ScoringParams& params, int k);

inline ConceptActivationMatrix<double> build_concept_activation_matrix(const MatrixXd& clip_emb,
                                                                      const MatrixXd& concept_emb,
                                                                      ConceptSource source = ConceptSource::DB) {
    return build_concept_activation_matrix<double>(clip_emb, concept_emb, source);
}

inline VectorXd score_concepts(const VectorXd& u, const ConceptActivationMatrix<double>& cam, SimilarityMethod method,
                               const ScoringParams& params, int k) {
    return score_concepts<double>(u, cam, method, params, k);
}

ConceptAssignment identify_closed_concept(const Eigen::Ref<const VectorXd>& scores, const ConceptSet& concepts,
                                          int top_n, std::string neuron_id = {},
                                          SimilarityMethod method = SimilarityMethod::cos,
                                          ConceptSource source = ConceptSource::DB);

struct LastLayerNeuronResult {
    std::string neuron_id;
    std::string predicted;
    std::string truth;
    double cos = 0.0;
};

struct LastLayerReport {
    std::string method;
    double top1 = 0.0;               ///< percent
    std::optional<double> top5;      ///< percent; unset for single-answer methods (ICL)
    double mean_cos = 0.0;
    std::vector<LastLayerNeuronResult> per_neuron;
};

/// Output neurons are 1-1 with classes; ground_truth[i] labels assignments[i].
LastLayerReport evaluate_last_layer(const std::vector<ConceptAssignment>& assignments,
                                    const std::vector<std::string>& ground_truth, const EmbeddingMatrix& concept_emb,
                                    bool ranked = true);

extern template struct ConceptActivationMatrix<float>;
extern template struct ConceptActivationMatrix<double>;
extern template class ConceptScorer<float>;
extern template class ConceptScorer<double>;

}  // namespace netdissect
