#include "netdissect/concept_scoring.hpp"

#include "netdissect/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace netdissect {

std::string to_string(ConceptSource s) { return s == ConceptSource::DB ? "DB" : "TAB"; }

std::string to_string(SimilarityMethod m) {
    switch (m) {
        case SimilarityMethod::cos: return "cos";
        case SimilarityMethod::cos_cubed: return "cos_cubed";
        case SimilarityMethod::rank_reorder: return "rank_reorder";
        case SimilarityMethod::wpmi: return "wpmi";
        case SimilarityMethod::soft_wpmi: return "soft_wpmi";
    }
    return "cos";
}

SimilarityMethod parse_similarity_method(const std::string& s) {
    if (s == "cos") return SimilarityMethod::cos;
    if (s == "cos_cubed" || s == "cos3") return SimilarityMethod::cos_cubed;
    if (s == "rank_reorder") return SimilarityMethod::rank_reorder;
    if (s == "wpmi") return SimilarityMethod::wpmi;
    if (s == "soft_wpmi" || s == "softwpmi") return SimilarityMethod::soft_wpmi;
    throw invalid_argument("unknown similarity method \"" + s + "\"");
}

ConceptSource parse_concept_source(const std::string& s) {
    if (s == "DB" || s == "db") return ConceptSource::DB;
    if (s == "TAB" || s == "tab") return ConceptSource::TAB;
    throw invalid_argument("unknown concept source \"" + s + "\"");
}

void ScoringParams::validate() const {
    if (!(gamma > 0.0)) throw invalid_argument("gamma must be > 0");
    if (!(lambda >= 0.0)) throw invalid_argument("lambda must be >= 0");
    if (soft_temp && !(*soft_temp > 0.0)) throw invalid_argument("soft_temp must be > 0");
    if (rank_pool && *rank_pool < 1) throw invalid_argument("rank_pool must be >= 1");
}

namespace {

/// Indices of the k largest entries, descending; ties to the lower index.
template <typename Scalar>
std::vector<Eigen::Index> top_indices(const Eigen::Ref<const Vector<Scalar>>& u, int k) {
    if (k < 1 || k > u.size())
        throw invalid_argument("K=" + std::to_string(k) + " out of range for " + std::to_string(u.size()) + " clips");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(u.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return u[a] != u[b] ? u[a] > u[b] : a < b; });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

template <typename Scalar>
Vector<Scalar> cube_centered(const Eigen::Ref<const Vector<Scalar>>& v) {
    const Vector<Scalar> c = v.array() - v.mean();
    return c.array().cube();
}

template <typename Scalar>
Vector<Scalar> cosine_against_columns(const Vector<Scalar>& u, const Matrix<Scalar>& cols, const char* what) {
    const Scalar un = u.norm();
    if (un == Scalar(0)) throw invalid_argument(std::string(what) + ": activation vector has zero norm");
    const Vector<Scalar> norms = cols.colwise().norm().transpose();
    for (Eigen::Index m = 0; m < norms.size(); ++m)
        if (norms[m] == Scalar(0))
            throw invalid_argument(std::string(what) + ": concept column " + std::to_string(m) + " has zero norm");
    return (cols.transpose() * u).cwiseQuotient(norms) / un;
}

}  // namespace

template <typename Scalar>
ConceptActivationMatrix<Scalar> build_concept_activation_matrix(const Eigen::Ref<const Matrix<Scalar>>& clip_emb,
                                                                const Eigen::Ref<const Matrix<Scalar>>& concept_emb,
                                                                ConceptSource source) {
    if (clip_emb.cols() != concept_emb.cols())
        throw invalid_argument("embedding dim mismatch: " + std::to_string(clip_emb.cols()) + " vs " +
                               std::to_string(concept_emb.cols()));
    if (clip_emb.rows() < 1 || concept_emb.rows() < 1) throw invalid_argument("need at least one clip and one concept");
    return {clip_emb * concept_emb.transpose(), source};
}

template <typename Scalar>
ConceptScorer<Scalar>::ConceptScorer(ConceptActivationMatrix<Scalar> cam, ScoringParams params)
    : cam_(std::move(cam)), params_(params) {
    params_.validate();
    const auto& P = cam_.P;
    if (!P.allFinite()) throw invalid_argument("concept activation matrix has non-finite entries");
    const Eigen::Index n = P.rows(), m = P.cols();
    const auto gamma = static_cast<Scalar>(params_.gamma);

    // Row-wise log-softmax over concepts.
    const Matrix<Scalar> z = gamma * P;
    const Vector<Scalar> row_max = z.rowwise().maxCoeff();
    const Matrix<Scalar> shifted = z.colwise() - row_max;
    const Vector<Scalar> lse = shifted.array().exp().rowwise().sum().log().matrix();
    log_cond_prob_ = shifted.colwise() - lse;
    cond_prob_ = log_cond_prob_.array().exp();
    log_marginal_ = (cond_prob_.colwise().sum().transpose() / static_cast<Scalar>(n)).array().log();

    column_rank_.resize(n, m);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index c = 0; c < m; ++c) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return P(a, c) > P(b, c); });
        for (Eigen::Index r = 0; r < n; ++r) column_rank_(order[static_cast<std::size_t>(r)], c) = static_cast<Scalar>(r + 1);
    }

    cubed_columns_.resize(n, m);
    for (Eigen::Index c = 0; c < m; ++c) cubed_columns_.col(c) = cube_centered<Scalar>(P.col(c));
}

template <typename Scalar>
Vector<Scalar> ConceptScorer<Scalar>::score(const Eigen::Ref<const Vector<Scalar>>& u, SimilarityMethod method,
                                            int k) const {
    if (u.size() != cam_.P.rows())
        throw invalid_argument("activation length " + std::to_string(u.size()) + " != clip count " +
                               std::to_string(cam_.P.rows()));
    if (!u.allFinite()) throw invalid_argument("activation vector has non-finite entries");
    switch (method) {
        case SimilarityMethod::cos: return cosine(u);
        case SimilarityMethod::cos_cubed: return cosine_cubed(u);
        case SimilarityMethod::rank_reorder: return rank_reorder(u, k);
        case SimilarityMethod::wpmi: return wpmi(u, k);
        case SimilarityMethod::soft_wpmi: return soft_wpmi(u, k);
    }
    throw invalid_argument("unknown similarity method");
}

template <typename Scalar>
Vector<Scalar> ConceptScorer<Scalar>::cosine(const Eigen::Ref<const Vector<Scalar>>& u) const {
    return cosine_against_columns<Scalar>(u, cam_.P, "cos");
}

template <typename Scalar>
Vector<Scalar> ConceptScorer<Scalar>::cosine_cubed(const Eigen::Ref<const Vector<Scalar>>& u) const {
    return cosine_against_columns<Scalar>(cube_centered<Scalar>(u), cubed_columns_, "cos_cubed");
}

template <typename Scalar>
Vector<Scalar> ConceptScorer<Scalar>::rank_reorder(const Eigen::Ref<const Vector<Scalar>>& u, int k) const {
    const int pool = params_.rank_pool.value_or(k);
    const auto top = top_indices<Scalar>(u, pool);
    Vector<Scalar> s = Vector<Scalar>::Zero(cam_.P.cols());
    for (auto j : top) s += column_rank_.row(j).transpose();
    return -s / static_cast<Scalar>(top.size());
}

template <typename Scalar>
Vector<Scalar> ConceptScorer<Scalar>::wpmi(const Eigen::Ref<const Vector<Scalar>>& u, int k) const {
    const auto top = top_indices<Scalar>(u, k);
    Vector<Scalar> s = Vector<Scalar>::Zero(cam_.P.cols());
    for (auto j : top) s += log_cond_prob_.row(j).transpose();
    return s - static_cast<Scalar>(params_.lambda) * static_cast<Scalar>(k) * log_marginal_;
}

template <typename Scalar>
Vector<Scalar> ConceptScorer<Scalar>::soft_wpmi(const Eigen::Ref<const Vector<Scalar>>& u, int k) const {
    if (k < 1) throw invalid_argument("K must be >= 1");
    Scalar temp;
    if (params_.soft_temp) {
        temp = static_cast<Scalar>(*params_.soft_temp);
    } else {
        if (u.size() < 2) throw invalid_argument("soft_wpmi: cannot estimate std(u) from one clip; set soft_temp explicitly");
        const Scalar mean = u.mean();
        temp = std::sqrt((u.array() - mean).square().sum() / static_cast<Scalar>(u.size() - 1));
        if (!(temp > Scalar(0)))
            throw invalid_argument("soft_wpmi: std(u) is zero (all activations equal); set soft_temp explicitly");
    }
    const Vector<Scalar> z = u / temp;
    const Vector<Scalar> e = (z.array() - z.maxCoeff()).exp();
    const Vector<Scalar> q = (static_cast<Scalar>(k) * e / e.sum()).cwiseMin(Scalar(1));

    const Eigen::Index n = cam_.P.rows(), m = cam_.P.cols();
    Vector<Scalar> s = Vector<Scalar>::Zero(m);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Scalar qj = q[j];
        if (qj == Scalar(0)) continue;
        if (qj == Scalar(1)) {
            s += log_cond_prob_.row(j).transpose();
            continue;
        }
        for (Eigen::Index c = 0; c < m; ++c) s[c] += std::log1p(qj * (cond_prob_(j, c) - Scalar(1)));
    }
    return s - static_cast<Scalar>(params_.lambda) * q.sum() * log_marginal_;
}

template <typename Scalar>
Vector<Scalar> score_concepts(const Eigen::Ref<const Vector<Scalar>>& u, const ConceptActivationMatrix<Scalar>& cam,
                              SimilarityMethod method, const ScoringParams& params, int k) {
    return ConceptScorer<Scalar>(cam, params).score(u, method, k);
}

ConceptAssignment identify_closed_concept(const Eigen::Ref<const VectorXd>& scores, const ConceptSet& concepts,
                                          int top_n, std::string neuron_id, SimilarityMethod method,
                                          ConceptSource source) {
    const auto m = static_cast<std::size_t>(scores.size());
    if (m != concepts.size())
        throw invalid_argument("score length " + std::to_string(m) + " != concept count " +
                               std::to_string(concepts.size()));
    if (top_n < 1 || static_cast<std::size_t>(top_n) > m)
        throw invalid_argument("top_n=" + std::to_string(top_n) + " out of range [1, " + std::to_string(m) + "]");
    if (!scores.allFinite()) throw invalid_argument("non-finite concept score");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
    });
    ConceptAssignment out{std::move(neuron_id), {}, method, source};
    for (int i = 0; i < top_n; ++i) {
        const auto c = order[static_cast<std::size_t>(i)];
        out.ranked_concepts.emplace_back(concepts[c], scores[static_cast<Eigen::Index>(c)]);
    }
    return out;
}

LastLayerReport evaluate_last_layer(const std::vector<ConceptAssignment>& assignments,
                                    const std::vector<std::string>& ground_truth, const EmbeddingMatrix& concept_emb,
                                    bool ranked) {
    if (assignments.size() != ground_truth.size())
        throw invalid_argument("assignments (" + std::to_string(assignments.size()) + ") and ground truth (" +
                               std::to_string(ground_truth.size()) + ") differ in length");
    if (assignments.empty()) throw invalid_argument("no output neurons to evaluate");
    LastLayerReport rep;
    rep.method = to_string(assignments.front().method);
    std::size_t hit1 = 0, hit5 = 0;
    double cos_sum = 0.0;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        const auto& a = assignments[i];
        if (a.ranked_concepts.empty()) throw invalid_argument("empty ranking for " + a.neuron_id);
        const auto& truth = ground_truth[i];
        const auto& pred = a.ranked_concepts.front().first;
        if (pred == truth) ++hit1;
        const auto depth = std::min<std::size_t>(5, a.ranked_concepts.size());
        for (std::size_t r = 0; r < depth; ++r)
            if (a.ranked_concepts[r].first == truth) {
                ++hit5;
                break;
            }
        const VectorXd ep = concept_emb.row(pred);
        const VectorXd et = concept_emb.row(truth);
        const double denom = ep.norm() * et.norm();
        const double c = denom > 0.0 ? ep.dot(et) / denom : 0.0;
        cos_sum += c;
        rep.per_neuron.push_back({a.neuron_id, pred, truth, c});
    }
    const double n = static_cast<double>(assignments.size());
    rep.top1 = 100.0 * static_cast<double>(hit1) / n;
    if (ranked) rep.top5 = 100.0 * static_cast<double>(hit5) / n;
    rep.mean_cos = cos_sum / n;
    return rep;
}

#define NETDISSECT_INSTANTIATE(S)                                                                            \
    template struct ConceptActivationMatrix<S>;                                                             \
    template class ConceptScorer<S>;                                                                        \
    template ConceptActivationMatrix<S> build_concept_activation_matrix<S>(                                 \
        const Eigen::Ref<const Matrix<S>>&, const Eigen::Ref<const Matrix<S>>&, ConceptSource);            \
    template Vector<S> score_concepts<S>(const Eigen::Ref<const Vector<S>>&, const ConceptActivationMatrix<S>&, \
                                         SimilarityMethod, const ScoringParams&, int);

NETDISSECT_INSTANTIATE(float)
NETDISSECT_INSTANTIATE(double)

#undef NETDISSECT_INSTANTIATE

}  // namespace netdissect
