// Acceptance checks: one PASS/FAIL line per criterion, exit 1 if any fails.

#include "netdissect/ablation.hpp"
#include "netdissect/audiostats.hpp"
#include "netdissect/concept_scoring.hpp"
#include "netdissect/dossier.hpp"
#include "netdissect/embedding.hpp"
#include "netdissect/fixtures.hpp"
#include "netdissect/interpretability.hpp"
#include "netdissect/random.hpp"
#include "netdissect/summarize_calibrate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <unistd.h>
#include <sstream>
#include <string>
#include <vector>

using namespace netdissect;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kNoiseFraction = 0.1;        // noise std relative to the column norm
constexpr double kNoisyTop1Min = 90.0;        // percent, 20-seed mean
constexpr int kNoiseSeeds = 20;
constexpr double kLastLayerSeconds = 5.0;
constexpr double kWpmiTol = 1e-9;
constexpr double kSoftTemp = 1e-6;
constexpr double kSoftTol = 1e-4;
constexpr double kOcpGapMin = 5.0;            // percentage points
constexpr double kRandomGapMax = 1.0;         // percentage points, 5-seed mean
constexpr double kAblationSeconds = 10.0;
constexpr double kSineMeanTol = 1e-3;
constexpr double kEndToEndSeconds = 60.0;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string num(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MatrixXd normal_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

MatrixXd unit_rows(MatrixXd m) {
    m.rowwise().normalize();
    return m;
}

// ---------------------------------------------------------------------------

constexpr SimilarityMethod kMethods[] = {SimilarityMethod::cos, SimilarityMethod::cos_cubed, SimilarityMethod::rank_reorder,
                                         SimilarityMethod::wpmi, SimilarityMethod::soft_wpmi};

/// 60 descriptions, each a noisy paraphrase of one of 12 concepts, in 32-d.
ConceptActivationMatrix<double> planted_corpus(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0));
    const MatrixXd concepts = unit_rows(normal_matrix(rng, 12, 32));
    MatrixXd desc(60, 32);
    for (int j = 0; j < 60; ++j) desc.row(j) = concepts.row(j % 12) + 0.6 * normal_matrix(rng, 1, 32) / std::sqrt(32.0);
    return build_concept_activation_matrix(unit_rows(desc), concepts);
}

double top1_percent(const ConceptScorer<double>& scorer, SimilarityMethod method, double noise, Rng& rng) {
    const MatrixXd& P = scorer.matrix().P;
    int hits = 0;
    for (Eigen::Index m = 0; m < P.cols(); ++m) {
        VectorXd u = P.col(m);
        if (noise > 0) u += noise * P.col(m).norm() * normal_matrix(rng, P.rows(), 1);
        Eigen::Index best;
        scorer.score(u, method, 5).maxCoeff(&best);
        hits += best == m;
    }
    return 100.0 * hits / static_cast<double>(P.cols());
}

Outcome planted_last_layer() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const ConceptScorer<double> clean(planted_corpus(0), {});
    Rng unused(0);
    for (auto m : kMethods) {
        const double t = top1_percent(clean, m, 0.0, unused);
        o.require(t == 100.0, to_string(m) + " noiseless top1 " + num(t));
    }
    for (auto m : {SimilarityMethod::cos, SimilarityMethod::cos_cubed, SimilarityMethod::wpmi}) {
        double total = 0;
        for (int s = 0; s < kNoiseSeeds; ++s) {
            const ConceptScorer<double> scorer(planted_corpus(static_cast<std::uint64_t>(s)), {});
            Rng rng(derive_seed(static_cast<std::uint64_t>(s), 1));
            total += top1_percent(scorer, m, kNoiseFraction, rng);
        }
        const double mean = total / kNoiseSeeds;
        o.note(to_string(m) + " noisy top1 " + num(mean));
        o.require(mean >= kNoisyTop1Min, to_string(m) + " noisy top1 " + num(mean) + " < " + num(kNoisyTop1Min));
    }
    const double secs = seconds_since(t0);
    o.note("time " + num(secs, 3) + " s");
    o.require(secs < kLastLayerSeconds, "runtime " + num(secs) + " s");
    return o;
}

Outcome wpmi_oracle() {
    Outcome o;
    ScoringParams p;
    p.gamma = 1.0;
    p.lambda = 0.0;
    const ConceptActivationMatrix<double> cam{MatrixXd::Identity(2, 2), ConceptSource::DB};
    const VectorXd s = score_concepts(VectorXd(VectorXd::Unit(2, 0)), cam, SimilarityMethod::wpmi, p, 1);
    const double e = std::exp(1.0);
    const double err = std::max(std::abs(s(0) - std::log(e / (e + 1))), std::abs(s(1) - std::log(1 / (e + 1))));
    o.note("scores " + num(s(0), 6) + ", " + num(s(1), 6));
    o.require(err <= kWpmiTol, "analytic error " + num(err));

    double worst = 0;
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        Rng rng(derive_seed(trial, 7));
        const Eigen::Index n = 4 + static_cast<Eigen::Index>(trial % 4), m = 3 + static_cast<Eigen::Index>(trial % 3);
        const ConceptActivationMatrix<double> c{normal_matrix(rng, n, m), ConceptSource::DB};
        const VectorXd u = normal_matrix(rng, n, 1);
        ScoringParams q;
        q.soft_temp = kSoftTemp;
        const VectorXd soft = score_concepts(u, c, SimilarityMethod::soft_wpmi, q, 1);
        const VectorXd hard = score_concepts(u, c, SimilarityMethod::wpmi, q, 1);
        worst = std::max(worst, (soft - hard).cwiseAbs().maxCoeff());
    }
    o.note("softWPMI max deviation " + num(worst));
    o.require(worst <= kSoftTol, "softWPMI deviation " + num(worst));
    return o;
}

// ---------------------------------------------------------------------------

LookupEmbedder angle_embedder(const std::vector<std::string>& keys, Rng& rng) {
    MatrixXd v(static_cast<Eigen::Index>(keys.size()), 2);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double a = 3.0 * rng.uniform();
        v.row(i) << std::cos(a), std::sin(a);
    }
    return LookupEmbedder(EmbeddingMatrix(v, keys, true));
}

bool is_subset(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    for (const auto& x : a)
        if (std::find(b.begin(), b.end(), x) == b.end()) return false;
    return true;
}

std::vector<NeuronDossier> replay_dissect(const fs::path& fixture) {
    DissectConfig cfg = desk_fixture_paths(fixture).config;
    const auto in = load_dissect_inputs(cfg);
    LlmClient client = make_llm_client(cfg);
    return run_dissect(in, cfg, client);
}

Outcome calibration_suite() {
    Outcome o;
    int mono = 0, idem = 0, empty = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(trial, 3));
        std::vector<std::string> hp, lp, keys;
        for (int i = 0; i < 6; ++i) hp.push_back("h" + std::to_string(i));
        for (int i = 0; i < 4; ++i) lp.push_back("l" + std::to_string(i));
        keys = hp;
        keys.insert(keys.end(), lp.begin(), lp.end());
        const auto emb = angle_embedder(keys, rng);
        const Summary h{hp, SummarySide::high, {}}, l{lp, SummarySide::low, {}};
        std::vector<std::string> prev;
        for (double t : {0.2, 0.4, 0.6, 0.7, 0.8, 0.95, 1.0}) {
            const auto c = calibrate(h, l, emb, t);
            mono += !is_subset(prev, c.points);
            prev = c.points;
            const auto again = calibrate(Summary{c.points, SummarySide::high, {}}, l, emb, t);
            idem += again.points != c.points;
        }
        empty += calibrate(h, Summary{{}, SummarySide::low, {}}, emb, 0.7).points != hp;
    }
    o.require(mono == 0, std::to_string(mono) + " monotonicity violations");
    o.require(idem == 0, std::to_string(idem) + " idempotence violations");
    o.require(empty == 0, std::to_string(empty) + " empty-S_l violations");

    const std::string shared = "There is no background noise.";
    int shared_cases = 0, removed = 0;
    for (const auto& d : replay_dissect(NETDISSECT_FIXTURE_DIR)) {
        const auto& hi = d.summary_high.points;
        const auto& lo = d.summary_low.points;
        if (std::find(hi.begin(), hi.end(), shared) == hi.end() || std::find(lo.begin(), lo.end(), shared) == lo.end())
            continue;
        ++shared_cases;
        const bool gone = std::find(d.calibrated.points.begin(), d.calibrated.points.end(), shared) == d.calibrated.points.end();
        removed += gone;
    }
    o.note("shared-point neurons " + std::to_string(shared_cases) + ", removed " + std::to_string(removed));
    o.require(shared_cases > 0 && removed == shared_cases, "shared background point not removed at t=0.7");
    return o;
}

// ---------------------------------------------------------------------------

/// Captions drawn from six topics, two sentences each.
ProbeCorpus topic_corpus() {
    const std::vector<std::vector<std::string>> topics = {
        {"A dog barks loudly.", "The dog keeps barking.", "A puppy yelps and barks."},
        {"Heavy rain falls on a roof.", "Raindrops patter steadily.", "Rain pours down outside."},
        {"A siren wails in the street.", "An ambulance siren sounds.", "The siren rises and falls."},
        {"Church bells ring out.", "A bell tolls slowly.", "Bells chime in the distance."},
        {"An engine idles roughly.", "A motor revs up.", "The engine hums and rattles."},
        {"A baby cries loudly.", "An infant is crying.", "The baby sobs and wails."}};
    std::vector<ProbeClip> clips;
    for (int i = 0; i < 60; ++i) {
        const auto& t = topics[static_cast<std::size_t>(i % 6)];
        const auto& u = topics[static_cast<std::size_t>((i / 6) % 6)];
        std::string caption = t[static_cast<std::size_t>(i % 3)] + " " + u[static_cast<std::size_t>((i / 2) % 3)];
        clips.push_back({"c" + std::to_string(i), caption, {}, {}, {}});
    }
    return ProbeCorpus(clips, {});
}

Outcome interpretability_suite() {
    Outcome o;
    int mono = 0, det = 0;
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        Rng rng(derive_seed(trial, 5));
        const MatrixXd x = normal_matrix(rng, 80, 4);
        const auto a = fit_kmeans(x, 6, trial);
        for (std::size_t i = 1; i < a.inertia_history.size(); ++i) mono += a.inertia_history[i] > a.inertia_history[i - 1];
        const auto b = fit_kmeans(x, 6, trial);
        det += std::memcmp(a.centroids.data(), b.centroids.data(), sizeof(double) * a.centroids.size()) != 0;
    }
    o.require(mono == 0, std::to_string(mono) + " inertia increases");
    o.require(det == 0, std::to_string(det) + " non-deterministic fits");

    const std::vector<std::vector<int>> split = {{1}, {1}, {1}, {1}, {2}};
    const bool text = classify_clusters(split, 4, InterpretabilityMode::text_rule).interpretable;
    const bool multi = classify_clusters(split, 4, InterpretabilityMode::multiset_rule).interpretable;
    o.require(text && !multi, "mode-distinguishing case");

    // 200 neurons over 4 blocks; deeper blocks draw their top-K clips from
    // fewer topics, so coherence rises with depth.
    const ProbeCorpus corpus = topic_corpus();
    const HashingEmbedder emb(64);
    const auto pool = build_sentence_pool(corpus, emb);
    const auto model = fit_kmeans(pool.embeddings, 6, 0);
    std::vector<std::vector<std::string>> high(200);
    std::vector<NeuronMeta> meta;
    Rng rng(11);
    for (int n = 0; n < 200; ++n) {
        const int block = n / 50;
        meta.push_back({"blocks." + std::to_string(block), block, n % 50});
        const auto anchor = rng.below(6);
        for (int k = 0; k < 5; ++k) {
            const bool on_topic = rng.uniform() < 0.2 + 0.2 * block;
            const auto topic = on_topic ? anchor : rng.below(6);
            const auto variant = rng.below(10);
            high[static_cast<std::size_t>(n)].push_back(corpus.clip(static_cast<std::size_t>(topic + 6 * variant)).caption);
        }
    }
    int violations = 0;
    std::string trace;
    for (auto mode : {InterpretabilityMode::text_rule, InterpretabilityMode::multiset_rule}) {
        std::map<int, double> prev;
        for (int tau = 1; tau <= 5; ++tau) {
            std::vector<InterpretabilityLabel> labels;
            for (int n = 0; n < 200; ++n)
                labels.push_back(classify_neuron(high[static_cast<std::size_t>(n)], model, emb, tau, mode,
                                                 meta[static_cast<std::size_t>(n)].id()));
            const auto frac = block_uninterpretable_fraction(labels, meta);
            for (const auto& [b, pct] : frac)
                if (prev.contains(b) && pct < prev[b]) ++violations;
            if (mode == InterpretabilityMode::text_rule && tau == 4) {
                for (const auto& [b, pct] : frac) trace += (trace.empty() ? "" : "/") + num(pct, 3);
            }
            prev = frac;
        }
    }
    o.note("tau=4 per-block uninterpretable % " + trace);
    o.require(violations == 0, std::to_string(violations) + " tau-monotonicity violations");
    return o;
}

// ---------------------------------------------------------------------------

FeedForwardNet random_net(std::uint64_t seed) {
    Rng rng(seed);
    FeedForwardNet net;
    net.layers.push_back({"fc1", normal_matrix(rng, 16, 8), normal_matrix(rng, 16, 1).col(0), Activation::relu});
    net.layers.push_back({"fc2", normal_matrix(rng, 12, 16), normal_matrix(rng, 12, 1).col(0), Activation::gelu});
    net.layers.push_back({"out", normal_matrix(rng, 5, 12), normal_matrix(rng, 5, 1).col(0), Activation::identity});
    net.class_names = {"a", "b", "c", "d", "e"};
    return net;
}

bool bit_equal(const MatrixXd& a, const MatrixXd& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

Outcome ablation_suite() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    int mismatches = 0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const auto net = random_net(trial);
        Rng rng(derive_seed(trial, 9));
        const MatrixXd x = normal_matrix(rng, 32, 8);
        MaskSpec full, a, b;
        for (const auto& u : hidden_pool(net)) {
            if (rng.below(3) == 0) continue;
            full.entries.insert(u);
            (rng.below(2) ? a : b).entries.insert(u);
        }
        MaskedNetwork once(net), twice(net), parts(net), plain(net), empty(net);
        once.apply(full);
        twice.apply(full).apply(full);
        parts.apply(a).apply(b);
        empty.apply(MaskSpec{});
        const MatrixXd ref = once.logits(x);
        mismatches += !bit_equal(ref, twice.logits(x));
        mismatches += !bit_equal(ref, parts.logits(x));
        mismatches += !bit_equal(plain.logits(x), empty.logits(x));
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " mask equivalence mismatches");

    const PlantedSpec spec;
    const auto net = planted_network(spec);
    const auto test = planted_samples(spec, 20, 1);
    const auto dossiers = planted_dossiers(spec);
    const auto ocp = run_unlearning_experiment(
        net, test, [&](std::size_t, const std::string& name) { return select_neurons_ocp(dossiers, name); }, "OCP");
    o.note("OCP Avg " + num(ocp.avg_pruned) + " dA " + num(ocp.mean_delta_A) + " dR " + num(ocp.mean_delta_R) +
           " gap " + num(ocp.gap));
    o.require(ocp.gap >= kOcpGapMin, "OCP gap " + num(ocp.gap));

    const auto size = static_cast<std::size_t>(std::lround(ocp.avg_pruned));
    double gap_sum = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        gap_sum += run_unlearning_experiment(net, test, random_masks(hidden_pool(net), size, seed), "random").gap;
    const double random_gap = gap_sum / 5.0;
    o.note("random gap " + num(random_gap));
    o.require(std::abs(random_gap) <= kRandomGapMax, "random |gap| " + num(std::abs(random_gap)));

    const double secs = seconds_since(t0);
    o.note("time " + num(secs, 3) + " s");
    o.require(secs < kAblationSeconds, "runtime " + num(secs) + " s");
    return o;
}

// ---------------------------------------------------------------------------

Waveform sine(double freq, double sr, double seconds, double amp) {
    Waveform w{{}, sr};
    const auto n = static_cast<std::size_t>(sr * seconds);
    for (std::size_t i = 0; i < n; ++i) w.samples.push_back(amp * std::sin(2 * std::numbers::pi * freq * i / sr));
    return w;
}

Outcome audiostats_suite() {
    Outcome o;
    const Waveform a = sine(440.0, 16000.0, 1.0, 1.0);
    const double mdf = median_frequency(a);
    const double bin = a.sample_rate / static_cast<double>(a.samples.size());
    o.note("MDF " + num(mdf, 6) + " Hz");
    o.require(std::abs(mdf - 440.0) <= bin, "440 Hz MDF " + num(mdf));

    const Waveform slow = sine(1.0, 4000.0, 2.0, 1.0);
    const double mean = mean_abs_amplitude(slow);
    o.note("mean|sin| " + num(mean, 6));
    o.require(std::abs(mean - 2.0 / std::numbers::pi) <= kSineMeanTol, "mean |sin| " + num(mean, 6));

    Waveform mix = sine(300.0, 8000.0, 1.0, 0.3);
    const Waveform hi = sine(2100.0, 8000.0, 1.0, 0.25);
    Rng rng(4);
    for (std::size_t i = 0; i < mix.samples.size(); ++i) mix.samples[i] += hi.samples[i] + 0.02 * rng.normal();
    const double base = median_frequency(mix);
    bool invariant = true;
    for (double s : {1e-3, 0.25, 2.0}) {
        Waveform w = mix;
        for (auto& x : w.samples) x *= s;
        invariant = invariant && median_frequency(w) == base;
    }
    o.require(invariant, "MDF changes under amplitude scaling");
    return o;
}

// ---------------------------------------------------------------------------

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
    files = 0;
    std::size_t in_b = 0;
    for (const auto& e : fs::recursive_directory_iterator(b)) in_b += e.is_regular_file();
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++files;
        const auto other = b / fs::relative(e.path(), a);
        if (!fs::exists(other) || read_bytes(e.path()) != read_bytes(other)) return false;
    }
    return files == in_b && files > 0;
}

Outcome end_to_end() {
    Outcome o;
    const fs::path fx = NETDISSECT_FIXTURE_DIR;
    const fs::path work = fs::temp_directory_path() / ("netdissect_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(work);
    const auto t0 = std::chrono::steady_clock::now();
    for (const char* run : {"a", "b"}) {
        const std::string cmd = std::string("\"") + NETDISSECT_CLI + "\" dissect --corpus \"" + (fx / "corpus.json").string() +
                                "\" --concepts \"" + (fx / "concepts.json").string() + "\" --activations \"" +
                                (fx / "activations.json").string() + "\" --embeddings \"" + (fx / "embeddings.json").string() +
                                "\" --audio-embeddings \"" + (fx / "audio_embeddings.json").string() + "\" --cache \"" +
                                (fx / "llm_cache.jsonl").string() + "\" --llm-mode replay --hashing-dim 64 --clusters 4 --out \"" +
                                (work / run).string() + "\" > /dev/null";
        const int rc = std::system(cmd.c_str());
        o.require(rc == 0, std::string("dissect run ") + run + " exit " + std::to_string(rc));
        if (rc != 0) return o;
    }
    const double secs = seconds_since(t0);
    std::size_t files = 0;
    const bool same = same_tree(work / "a", work / "b", files);
    o.note(std::to_string(files) + " files, time " + num(secs, 3) + " s");
    o.require(same, "dossier directories differ");
    o.require(secs < kEndToEndSeconds, "runtime " + num(secs) + " s");
    fs::remove_all(work);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"planted_last_layer_recovery", planted_last_layer},
        {"wpmi_hand_oracle", wpmi_oracle},
        {"calibration_suite", calibration_suite},
        {"interpretability_suite", interpretability_suite},
        {"ablation_suite", ablation_suite},
        {"audiostats", audiostats_suite},
        {"end_to_end_determinism", end_to_end},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
