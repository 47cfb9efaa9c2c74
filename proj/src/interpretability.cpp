#include "netdissect/interpretability.hpp"

#include "netdissect/error.hpp"
#include "netdissect/random.hpp"
#include "netdissect/text.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

namespace netdissect {

SentencePool build_sentence_pool(const ProbeCorpus& corpus, const TextEmbedder& embedder) {
    SentencePool pool;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto sentences = text::split_sentences(corpus.clip(i).caption);
        if (sentences.empty()) throw format_error("caption of clip \"" + corpus.clip(i).id + "\" has no sentences");
        for (const auto& s : sentences) pool.sentences.emplace_back(i, s);
    }
    std::vector<std::string> texts;
    texts.reserve(pool.sentences.size());
    for (const auto& [_, s] : pool.sentences) texts.push_back(s);
    pool.embeddings = embedder.embed_all(texts);
    if (static_cast<std::size_t>(pool.embeddings.rows()) != pool.sentences.size())
        throw format_error("sentence/embedding count mismatch");
    return pool;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
int KMeansModel<Scalar>::predict(const Eigen::Ref<const Vector<Scalar>>& x) const {
    if (x.size() != centroids.cols())
        throw invalid_argument("point dim " + std::to_string(x.size()) + " != centroid dim " +
                               std::to_string(centroids.cols()));
    int best = 0;
    Scalar best_d = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const Scalar d = (centroids.row(c).transpose() - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

template <typename Scalar>
std::vector<int> KMeansModel<Scalar>::predict_rows(const Eigen::Ref<const Matrix<Scalar>>& rows) const {
    std::vector<int> out(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) out[static_cast<std::size_t>(i)] = predict(rows.row(i).transpose());
    return out;
}

namespace {

template <typename Scalar>
Matrix<Scalar> kmeans_plus_plus(const Eigen::Ref<const Matrix<Scalar>>& data, int k, Rng& rng) {
    const Eigen::Index n = data.rows();
    Matrix<Scalar> centers(k, data.cols());
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    Eigen::Index first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    centers.row(0) = data.row(first);
    chosen[static_cast<std::size_t>(first)] = true;
    Vector<double> d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = static_cast<double>((data.row(i) - centers.row(0)).squaredNorm());

    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = -1;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) continue;
                acc += d2[i];
                pick = i;
                if (acc > r) break;
            }
        }
        if (pick < 0) {  // every remaining point coincides with a center
            for (Eigen::Index i = 0; i < n; ++i)
                if (!chosen[static_cast<std::size_t>(i)]) {
                    pick = i;
                    break;
                }
        }
        centers.row(c) = data.row(pick);
        chosen[static_cast<std::size_t>(pick)] = true;
        for (Eigen::Index i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], static_cast<double>((data.row(i) - centers.row(c)).squaredNorm()));
    }
    return centers;
}

template <typename Scalar>
Scalar assign(const Eigen::Ref<const Matrix<Scalar>>& data, const Matrix<Scalar>& centers, std::vector<int>& labels,
              std::vector<Scalar>& dist) {
    Scalar inertia = 0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        int best = 0;
        Scalar best_d = std::numeric_limits<Scalar>::infinity();
        for (Eigen::Index c = 0; c < centers.rows(); ++c) {
            const Scalar d = (data.row(i) - centers.row(c)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        labels[static_cast<std::size_t>(i)] = best;
        dist[static_cast<std::size_t>(i)] = best_d;
        inertia += best_d;
    }
    return inertia;
}

}  // namespace

template <typename Scalar>
KMeansModel<Scalar> fit_kmeans(const Eigen::Ref<const Matrix<Scalar>>& data, int k, std::uint64_t seed, int max_iter) {
    const Eigen::Index n = data.rows();
    if (k < 1) throw invalid_argument("k must be >= 1");
    if (k > n) throw invalid_argument("k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
    if (max_iter < 1) throw invalid_argument("max_iter must be >= 1");
    if (!data.allFinite()) throw invalid_argument("k-means input has non-finite values");

    Rng rng(seed);
    KMeansModel<Scalar> model;
    model.k = k;
    model.seed = seed;
    model.centroids = kmeans_plus_plus<Scalar>(data, k, rng);

    std::vector<int> labels(static_cast<std::size_t>(n), -1), previous;
    std::vector<Scalar> dist(static_cast<std::size_t>(n));
    for (int it = 0; it < max_iter; ++it) {
        previous = labels;
        model.inertia = assign<Scalar>(data, model.centroids, labels, dist);
        model.inertia_history.push_back(model.inertia);
        model.iterations = it + 1;
        if (labels == previous) break;

        Matrix<Scalar> sums = Matrix<Scalar>::Zero(k, data.cols());
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(labels[static_cast<std::size_t>(i)]) += data.row(i);
            ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                model.centroids.row(c) = sums.row(c) / static_cast<Scalar>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
            model.centroids.row(c) = data.row(far);
            dist[static_cast<std::size_t>(far)] = 0;
        }
    }
    return model;
}

int elbow_from_inertia(const std::vector<int>& ks, const std::vector<double>& inertia) {
    if (ks.size() != inertia.size()) throw invalid_argument("k and inertia lists differ in length");
    if (ks.size() < 3) throw invalid_argument("elbow selection needs at least three k values");
    for (std::size_t i = 1; i < ks.size(); ++i)
        if (ks[i] != ks[i - 1] + 1) throw invalid_argument("k values must be consecutive");
    int best_k = ks[1];
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
        const double d2 = inertia[i - 1] - 2.0 * inertia[i] + inertia[i + 1];
        if (d2 > best) {
            best = d2;
            best_k = ks[i];
        }
    }
    return best_k;
}

ElbowResult elbow_select_k(const MatrixXd& data, int k_min, int k_max, std::uint64_t seed) {
    if (k_min < 1 || k_max > data.rows() || k_min > k_max)
        throw invalid_argument("k range [" + std::to_string(k_min) + ", " + std::to_string(k_max) +
                               "] outside [1, " + std::to_string(data.rows()) + "]");
    if (k_max - k_min + 1 < 3) throw invalid_argument("elbow selection needs a k range of at least three values");
    ElbowResult r;
    for (int k = k_min; k <= k_max; ++k) {
        r.ks.push_back(k);
        r.inertia.push_back(fit_kmeans(data, k, seed).inertia);
    }
    r.k = elbow_from_inertia(r.ks, r.inertia);
    return r;
}

// ---------------------------------------------------------------------------

std::string to_string(InterpretabilityMode m) {
    return m == InterpretabilityMode::text_rule ? "text_rule" : "multiset_rule";
}

InterpretabilityMode parse_interpretability_mode(const std::string& s) {
    if (s == "text_rule" || s == "text") return InterpretabilityMode::text_rule;
    if (s == "multiset_rule" || s == "multiset") return InterpretabilityMode::multiset_rule;
    throw invalid_argument("unknown interpretability mode \"" + s + "\"");
}

InterpretabilityLabel classify_clusters(const std::vector<std::vector<int>>& description_clusters, int tau,
                                        InterpretabilityMode mode, std::string neuron_id) {
    if (tau < 1) throw invalid_argument("tau must be >= 1");
    InterpretabilityLabel label{std::move(neuron_id), false, mode, tau, {}, std::nullopt};
    const auto k = static_cast<int>(description_clusters.size());
    if (tau > k)
        label.warning = "tau=" + std::to_string(tau) + " exceeds K=" + std::to_string(k) + "; neuron is vacuously uninterpretable";
    if (k == 0) return label;

    std::vector<std::map<int, int>> multisets;
    for (const auto& d : description_clusters) {
        std::map<int, int> m;
        for (int c : d) ++m[c];
        multisets.push_back(std::move(m));
    }

    if (mode == InterpretabilityMode::text_rule) {
        std::map<int, int> presence;
        for (const auto& m : multisets)
            for (const auto& [c, _] : m) ++presence[c];
        int best_c = -1, best = 0;
        for (const auto& [c, n] : presence)
            if (n > best) {
                best = n;
                best_c = c;
            }
        if (best_c >= 0) label.support[best_c] = best;
        label.interpretable = best >= tau;
        return label;
    }

    std::map<int, int> inter = multisets.front();
    for (std::size_t i = 1; i < multisets.size(); ++i) {
        std::map<int, int> next;
        for (const auto& [c, n] : inter)
            if (auto it = multisets[i].find(c); it != multisets[i].end()) next[c] = std::min(n, it->second);
        inter = std::move(next);
    }
    int card = 0;
    for (const auto& [_, n] : inter) card += n;
    label.support = std::move(inter);
    label.interpretable = card >= tau;
    return label;
}

InterpretabilityLabel classify_neuron(const std::vector<std::string>& high_descriptions,
                                      const KMeansModel<double>& model, const TextEmbedder& embedder, int tau,
                                      InterpretabilityMode mode, std::string neuron_id) {
    if (high_descriptions.empty()) throw invalid_argument("classify_neuron needs at least one description");
    std::vector<std::vector<int>> clusters;
    for (const auto& d : high_descriptions) {
        std::vector<int> ids;
        for (const auto& s : text::split_sentences(d)) ids.push_back(model.predict(embedder.embed(s)));
        clusters.push_back(std::move(ids));
    }
    return classify_clusters(clusters, tau, mode, std::move(neuron_id));
}

std::map<int, double> block_uninterpretable_fraction(const std::vector<InterpretabilityLabel>& labels,
                                                     const std::vector<NeuronMeta>& neurons) {
    std::unordered_map<std::string, int> block_of;
    for (const auto& n : neurons) block_of.emplace(n.id(), n.block_index);
    std::map<int, std::pair<int, int>> acc;  // block -> (uninterpretable, total)
    for (const auto& l : labels) {
        auto it = block_of.find(l.neuron_id);
        if (it == block_of.end()) throw invalid_argument("label for unknown neuron " + l.neuron_id);
        auto& [u, t] = acc[it->second];
        if (!l.interpretable) ++u;
        ++t;
    }
    std::map<int, double> out;
    for (const auto& [b, ut] : acc) out[b] = 100.0 * ut.first / ut.second;
    return out;
}

#define NETDISSECT_INSTANTIATE(S)                                                                        \
    template struct KMeansModel<S>;                                                                     \
    template KMeansModel<S> fit_kmeans<S>(const Eigen::Ref<const Matrix<S>>&, int, std::uint64_t, int);

NETDISSECT_INSTANTIATE(float)
NETDISSECT_INSTANTIATE(double)

#undef NETDISSECT_INSTANTIATE

}  // namespace netdissect
