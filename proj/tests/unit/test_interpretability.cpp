#include "doctest.h"

#include "netdissect/embedding.hpp"
#include "netdissect/error.hpp"
#include "netdissect/interpretability.hpp"

#include <cstring>
#include <random>

using namespace netdissect;

namespace {

MatrixXd blobs(std::mt19937& gen, int per, const std::vector<std::vector<double>>& centers, double spread) {
    std::normal_distribution<double> d(0.0, spread);
    const int dim = static_cast<int>(centers[0].size());
    MatrixXd x(per * static_cast<int>(centers.size()), dim);
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (int i = 0; i < per; ++i)
            for (int j = 0; j < dim; ++j) x(static_cast<int>(c) * per + i, j) = centers[c][j] + d(gen);
    return x;
}

using Clusters = std::vector<std::vector<int>>;

}  // namespace

TEST_CASE("sentence pool splits captions into sentences") {
    const ProbeCorpus corpus({{"a", "A dog barks. Rain falls.", {}, {}, {}}, {"b", "One sentence.", {}, {}, {}},
                              {"c", "Wind blows. Leaves rustle.", {}, {}, {}}},
                             {});
    const HashingEmbedder emb(16);
    const auto pool = build_sentence_pool(corpus, emb);
    REQUIRE(pool.sentences.size() == 5);
    CHECK(pool.sentences[0] == std::pair<std::size_t, std::string>{0, "A dog barks."});
    CHECK(pool.sentences[2] == std::pair<std::size_t, std::string>{1, "One sentence."});
    CHECK(pool.embeddings.rows() == 5);
    CHECK(pool.embeddings.row(1) == emb.embed("Rain falls.").transpose());
}

TEST_CASE("k-means on two separated pairs matches the closed form") {
    MatrixXd x(4, 2);
    x << 0, 0, 0, 1, 10, 10, 10, 12;
    const auto m = fit_kmeans(x, 2, 0);
    MatrixXd expected(2, 2);
    expected << 0, 0.5, 10, 11;
    const int a = m.predict(VectorXd(x.row(0).transpose()));
    CHECK(m.centroids.row(a).isApprox(expected.row(0)));
    CHECK(m.centroids.row(1 - a).isApprox(expected.row(1)));
    CHECK(m.inertia == doctest::Approx(0.25 * 2 + 1.0 * 2));
}

TEST_CASE("k equal to the row count gives zero inertia") {
    std::mt19937 gen(1);
    const MatrixXd x = blobs(gen, 4, {{0, 0}, {3, 3}}, 1.0);
    CHECK(fit_kmeans(x, 8, 3).inertia == doctest::Approx(0.0));
    CHECK_THROWS_AS(fit_kmeans(x, 9, 0), Error);
    CHECK_THROWS_AS(fit_kmeans(x, 0, 0), Error);
}

TEST_CASE("Lloyd inertia never increases and seeds are bitwise deterministic") {
    std::mt19937 gen(2);
    for (int trial = 0; trial < 10; ++trial) {
        const MatrixXd x = blobs(gen, 30, {{0, 0, 0}, {2, 0, 1}, {0, 3, 0}, {1, 1, 1}}, 0.8);
        const auto a = fit_kmeans(x, 5, static_cast<std::uint64_t>(trial));
        REQUIRE(a.inertia_history.size() >= 1);
        for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
            CHECK(a.inertia_history[i] <= a.inertia_history[i - 1]);
        const auto b = fit_kmeans(x, 5, static_cast<std::uint64_t>(trial));
        CHECK(std::memcmp(a.centroids.data(), b.centroids.data(), sizeof(double) * a.centroids.size()) == 0);
        CHECK(a.inertia == b.inertia);
    }
}

TEST_CASE("float k-means agrees with double on separated data") {
    std::mt19937 gen(4);
    const MatrixXd x = blobs(gen, 10, {{0, 0}, {20, 0}, {0, 20}}, 0.5);
    const auto d = fit_kmeans(x, 3, 1);
    const auto f = fit_kmeans<float>(x.cast<float>(), 3, 1);
    CHECK(f.inertia == doctest::Approx(d.inertia).epsilon(1e-3));
    CHECK(d.predict_rows(x) == f.predict_rows(x.cast<float>()));
}

TEST_CASE("elbow rule from inertia") {
    CHECK(elbow_from_inertia({1, 2, 3, 4, 5}, {100, 40, 35, 33, 32}) == 2);
    CHECK(elbow_from_inertia({1, 2, 3, 4, 5}, {50, 40, 30, 20, 10}) == 2);
    CHECK(elbow_from_inertia({3, 4, 5, 6}, {50, 45, 20, 19}) == 5);
    CHECK_THROWS_AS(elbow_from_inertia({2, 3}, {10, 5}), Error);
}

TEST_CASE("elbow selection finds separated blobs") {
    std::mt19937 gen(6);
    const MatrixXd x = blobs(gen, 25, {{0, 0}, {10, 0}, {0, 10}}, 0.3);
    const auto r = elbow_select_k(x, 1, 8, 0);
    CHECK(r.k == 3);
    CHECK(r.ks.size() == 8);
    CHECK_THROWS_AS(elbow_select_k(x, 2, 3, 0), Error);
}

TEST_CASE("classification rules") {
    const Clusters all3(5, std::vector<int>(4, 3));
    CHECK(classify_clusters(all3, 4, InterpretabilityMode::text_rule).interpretable);
    CHECK(classify_clusters(all3, 4, InterpretabilityMode::multiset_rule).interpretable);

    const Clusters split = {{1}, {1}, {1}, {1}, {2}};
    const auto text = classify_clusters(split, 4, InterpretabilityMode::text_rule, "n#0");
    CHECK(text.interpretable);
    CHECK(text.support == std::map<int, int>{{1, 4}});
    const auto multi = classify_clusters(split, 4, InterpretabilityMode::multiset_rule);
    CHECK_FALSE(multi.interpretable);
    CHECK(multi.support.empty());

    // Multiset intersection counts repeats.
    const Clusters repeats = {{1, 1, 2}, {1, 1, 1}, {2, 1, 1}};
    CHECK(classify_clusters(repeats, 2, InterpretabilityMode::multiset_rule).interpretable);
    CHECK_FALSE(classify_clusters(repeats, 3, InterpretabilityMode::multiset_rule).interpretable);

    const auto vacuous = classify_clusters(split, 6, InterpretabilityMode::text_rule);
    CHECK_FALSE(vacuous.interpretable);
    CHECK(vacuous.warning.has_value());
    CHECK_THROWS_AS(classify_clusters(split, 0, InterpretabilityMode::text_rule), Error);
}

TEST_CASE("classification monotonicity, mode implication and relabeling invariance") {
    std::mt19937 gen(7);
    std::uniform_int_distribution<int> cid(0, 3), len(1, 3);
    for (int trial = 0; trial < 300; ++trial) {
        Clusters c(5);
        for (auto& d : c) {
            const int n = len(gen);
            for (int i = 0; i < n; ++i) d.push_back(cid(gen));
        }
        Clusters relabeled = c;
        for (auto& d : relabeled)
            for (auto& x : d) x = (x + 2) % 4;
        for (auto mode : {InterpretabilityMode::text_rule, InterpretabilityMode::multiset_rule}) {
            for (int tau = 2; tau <= 5; ++tau)
                if (classify_clusters(c, tau, mode).interpretable) CHECK(classify_clusters(c, tau - 1, mode).interpretable);
            for (int tau = 1; tau <= 5; ++tau)
                CHECK(classify_clusters(c, tau, mode).interpretable == classify_clusters(relabeled, tau, mode).interpretable);
        }
        for (int tau = 1; tau <= 5; ++tau)
            if (classify_clusters(c, tau, InterpretabilityMode::multiset_rule).interpretable)
                CHECK(classify_clusters(c, tau, InterpretabilityMode::text_rule).interpretable);
    }
}

TEST_CASE("classify_neuron projects caption sentences onto the clusters") {
    MatrixXd x(4, 2);
    x << 0, 0, 0, 1, 10, 10, 10, 12;
    const auto model = fit_kmeans(x, 2, 0);
    MatrixXd rows(3, 2);
    rows << 0, 0.2, 10, 11, 0, 0.7;
    const LookupEmbedder emb(EmbeddingMatrix(rows, {"Near home.", "Near river.", "Also home."}, false));
    const std::vector<std::string> high = {"Near home.", "Also home. Near river.", "Near home.", "Also home.", "Near river."};
    CHECK(classify_neuron(high, model, emb, 4, InterpretabilityMode::text_rule).interpretable);
    CHECK_FALSE(classify_neuron(high, model, emb, 5, InterpretabilityMode::text_rule).interpretable);
    CHECK_FALSE(classify_neuron(high, model, emb, 1, InterpretabilityMode::multiset_rule).interpretable);
}

TEST_CASE("per-block uninterpretable percentages") {
    auto lab = [](std::string id, bool i) {
        InterpretabilityLabel l;
        l.neuron_id = std::move(id);
        l.interpretable = i;
        return l;
    };
    const std::vector<NeuronMeta> meta = {{"b0", 0, 0}, {"b0", 0, 1}, {"b0", 0, 2}, {"b0", 0, 3}, {"b1", 1, 0}};
    const auto f = block_uninterpretable_fraction(
        {lab("b0#0", false), lab("b0#1", true), lab("b0#2", true), lab("b0#3", false), lab("b1#0", true)}, meta);
    CHECK(f == std::map<int, double>{{0, 50.0}, {1, 0.0}});
    CHECK_THROWS_AS(block_uninterpretable_fraction({lab("b9#0", true)}, meta), Error);
}
