#include "netdissect/fixtures.hpp"

#include "netdissect/audiostats.hpp"
#include "netdissect/embedding.hpp"
#include "netdissect/error.hpp"
#include "netdissect/open_concepts.hpp"
#include "netdissect/random.hpp"
#include "netdissect/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace netdissect {

namespace fs = std::filesystem;

namespace {

constexpr int kClipsPerClass = 8;
constexpr double kSampleRate = 8000.0;
constexpr int kEmbeddingDim = 64;

const std::vector<std::vector<std::string>>& desk_captions() {
    static const std::vector<std::vector<std::string>> captions = {
        {"A dog is barking loudly in a backyard. There is no background noise.",
         "A small dog barks with a high-pitched yelp. There is no background noise.",
         "Loud barking from a large dog echoes nearby.",
         "A dog growls and then barks twice. Birds chirp in the distance.",
         "Repetitive barking of an excited dog is heard. There is no background noise.",
         "A running dog pants and barks sharply.",
         "A dog barks at a passing car. A man speaks softly.",
         "Deep barking from a big dog is clear and loud."},
        {"Rain falls steadily on a tin roof. There is no background noise.",
         "Water drops patter softly on leaves.",
         "Heavy rain pours down with distant thunder. There is no background noise.",
         "Gentle rain and water drops hit a window.",
         "Rain splashes on the pavement as a car passes.",
         "A steady shower of rain creates a soothing hiss. There is no background noise.",
         "Water drops fall into a puddle in a quiet room.",
         "Rain drums on an umbrella with a muffled sound."},
        {"A police siren wails loudly as it passes. There is no background noise.",
         "A high-pitched siren rises and falls repeatedly.",
         "An ambulance siren blares through traffic. There is no background noise.",
         "A loud siren echoes between tall buildings.",
         "A fire truck siren sounds in the distance with honking horns.",
         "A shrill siren is clear and loud. There is no background noise.",
         "A siren fades away as the vehicle drives off.",
         "A wailing siren and a running engine are heard."}};
    return captions;
}

const std::vector<std::string>& desk_concepts() {
    static const std::vector<std::string> c = {"dog",    "rain",        "siren",       "cat",
                                               "church bells", "engine", "water drops", "crying baby"};
    return c;
}

std::vector<std::string> content_words(const std::string& s) {
    std::vector<std::string> out;
    for (auto& w : text::word_tokens(s))
        if (!is_stop_word(w)) out.push_back(std::move(w));
    return out;
}

std::string scripted_summary(const std::vector<std::string>& descriptions) {
    std::map<std::string, int> doc_freq;
    for (const auto& d : descriptions) {
        auto words = content_words(d);
        for (const auto& w : std::set<std::string>(words.begin(), words.end())) ++doc_freq[w];
    }
    struct Candidate {
        std::string sentence;
        int repeats;  // descriptions containing the exact sentence
        int score;
    };
    std::vector<Candidate> candidates;
    for (const auto& d : descriptions)
        for (const auto& s : text::split_sentences(d)) {
            auto it = std::find_if(candidates.begin(), candidates.end(), [&](const Candidate& c) { return c.sentence == s; });
            if (it != candidates.end()) {
                ++it->repeats;
                continue;
            }
            int score = 0;
            for (const auto& w : content_words(s)) score += doc_freq[w];
            candidates.push_back({s, 1, score});
        }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        const bool ra = a.repeats > 1, rb = b.repeats > 1;
        if (ra != rb) return ra;
        return a.score > b.score;
    });
    std::string out = "Sure! Here are the commonalities among these descriptions:\n\n";
    const std::size_t n = std::min<std::size_t>(3, candidates.size());
    for (std::size_t i = 0; i < n; ++i) out += std::to_string(i + 1) + ". " + candidates[i].sentence + "\n";
    out += "\nI hope this helps!";
    return out;
}

std::string scripted_icl(const std::string& prompt) {
    const auto lines = text::split_lines(prompt);
    std::vector<std::string> concepts;
    if (lines.size() > 1) {
        std::string rest = lines[1];
        for (std::size_t pos = 0; pos <= rest.size();) {
            const auto next = rest.find(", ", pos);
            concepts.push_back(text::trim(rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos)));
            if (next == std::string::npos) break;
            pos = next + 2;
        }
    }
    const auto at = prompt.rfind("Description: ");
    const std::string description = at == std::string::npos ? prompt : prompt.substr(at);
    const auto words = text::word_tokens(description);
    const std::set<std::string> present(words.begin(), words.end());
    std::string best;
    int best_hits = 0;
    for (const auto& c : concepts) {
        int hits = 0;
        for (const auto& w : text::word_tokens(c)) hits += present.contains(w) || present.contains(w + "s");
        if (hits > best_hits) {
            best_hits = hits;
            best = c;
        }
    }
    if (best.empty()) return "The description does not clearly match a class.\nAnswer: ambient sound";
    return "The description mentions sounds typical of " + best + ".\nAnswer: " + best;
}

VectorXd normalized(VectorXd v) {
    const double n = v.norm();
    return n > 0 ? VectorXd(v / n) : v;
}

Waveform desk_waveform(int cls, int variant, std::uint64_t seed) {
    Waveform w;
    w.sample_rate = kSampleRate;
    const int n = 2000;
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(cls * kClipsPerClass + variant)));
    w.samples.resize(n);
    for (int i = 0; i < n; ++i) {
        const double t = i / kSampleRate;
        double s = 0.0;
        switch (cls) {
            case 0:  // barking: loud 450-600 Hz bursts
                s = (0.7 + 0.02 * variant) * std::sin(2 * M_PI * (450.0 + 20.0 * variant) * t) * ((i / 400) % 2 == 0 ? 1.0 : 0.3);
                break;
            case 1:  // rain: quiet broadband noise
                s = 0.12 * (2.0 * rng.uniform() - 1.0);
                break;
            default:  // siren: sweeping tone
                s = 0.6 * std::sin(2 * M_PI * (900.0 + 300.0 * std::sin(2 * M_PI * 2.0 * t)) * t);
                break;
        }
        w.samples[static_cast<std::size_t>(i)] = s;
    }
    return w;
}

}  // namespace

const std::vector<std::string>& scripted_acoustic_adjectives() {
    static const std::vector<std::string> words = {"clear",  "deep",       "distant",    "gentle",  "high-pitched",
                                                   "loud",   "muffled",    "quiet",      "repetitive", "sharp",
                                                   "shrill", "soft",       "soothing",   "steady",  "wailing"};
    return words;
}

std::string scripted_llm_reply(const std::string& prompt) {
    if (prompt.starts_with("Adjective: ")) {
        const auto end = prompt.find('\n');
        const auto word = text::trim(prompt.substr(11, end - 11));
        const auto& yes = scripted_acoustic_adjectives();
        if (std::find(yes.begin(), yes.end(), word) != yes.end())
            return "Yes, \"" + word + "\" can describe the acoustic character of a sound.";
        return "No, \"" + word + "\" describes something other than sound.";
    }
    if (prompt.ends_with("Response:")) return scripted_icl(prompt);
    std::vector<std::string> descriptions;
    for (const auto& line : text::split_lines(prompt)) {
        const auto dot = line.find(". ");
        if (dot == std::string::npos || dot == 0) continue;
        if (std::all_of(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(dot), [](char c) { return c >= '0' && c <= '9'; }))
            descriptions.push_back(line.substr(dot + 2));
    }
    if (descriptions.empty()) return "I'm sorry, I could not find any descriptions.";
    return scripted_summary(descriptions);
}

// ---------------------------------------------------------------------------

int planted_concept_unit(const PlantedSpec& spec, int c, int j) { return c * spec.per_class + j; }

FeedForwardNet planted_network(const PlantedSpec& spec) {
    const int n_classes = static_cast<int>(spec.class_names.size());
    const int in = n_classes + spec.noise_dims;
    const int hidden = n_classes * spec.per_class + spec.fillers;
    Rng rng(derive_seed(spec.seed, 0));

    DenseLayer fc1{"fc1", MatrixXd::Zero(hidden, in), VectorXd::Zero(hidden), Activation::relu};
    for (int c = 0; c < n_classes; ++c)
        for (int j = 0; j < spec.per_class; ++j) {
            const int u = planted_concept_unit(spec, c, j);
            fc1.weights(u, c) = 1.0 + 0.1 * j;
            for (int d = 0; d < spec.noise_dims; ++d) fc1.weights(u, n_classes + d) = 0.02 * rng.normal();
        }
    for (int f = 0; f < spec.fillers; ++f) {
        const int u = n_classes * spec.per_class + f;
        for (int d = 0; d < spec.noise_dims; ++d) fc1.weights(u, n_classes + d) = 0.5 * rng.normal();
        fc1.bias(u) = 0.1;
    }

    DenseLayer out{"out", MatrixXd::Zero(n_classes, hidden), VectorXd::Zero(n_classes), Activation::identity};
    for (int c = 0; c < n_classes; ++c) {
        for (int j = 0; j < spec.per_class; ++j) out.weights(c, planted_concept_unit(spec, c, j)) = spec.concept_gain;
        for (int f = 0; f < spec.fillers; ++f) out.weights(c, n_classes * spec.per_class + f) = 0.2;
    }
    FeedForwardNet net{{std::move(fc1), std::move(out)}, spec.class_names};
    net.validate();
    return net;
}

LabeledSet planted_samples(const PlantedSpec& spec, int per_class, std::uint64_t seed) {
    const int n_classes = static_cast<int>(spec.class_names.size());
    LabeledSet s;
    s.inputs = MatrixXd::Zero(n_classes * per_class, n_classes + spec.noise_dims);
    Rng rng(seed);
    for (int i = 0; i < n_classes * per_class; ++i) {
        const int c = i % n_classes;
        s.labels.push_back(c);
        s.inputs(i, c) = 0.6 + 0.8 * rng.uniform();
        for (int d = 0; d < spec.noise_dims; ++d) s.inputs(i, n_classes + d) = rng.normal();
    }
    return s;
}

std::vector<NeuronDossier> planted_dossiers(const PlantedSpec& spec) {
    const int n_classes = static_cast<int>(spec.class_names.size());
    std::vector<NeuronDossier> out;
    const int hidden = n_classes * spec.per_class + spec.fillers;
    for (int u = 0; u < hidden; ++u) {
        NeuronDossier d;
        d.meta = {"fc1", 0, u};
        d.neuron_id = d.meta.id();
        auto& nouns = d.open_sets[PosClass::noun];
        nouns = {"sound", "audio"};
        if (u < n_classes * spec.per_class) nouns.insert(spec.class_names[static_cast<std::size_t>(u / spec.per_class)]);
        d.open_sets[PosClass::adjective] = {"loud"};
        out.push_back(std::move(d));
    }
    return out;
}

// ---------------------------------------------------------------------------

DeskFixture desk_fixture_paths(const fs::path& dir) {
    DeskFixture f;
    f.dir = dir;
    f.net = dir / "net.json";
    f.testset = dir / "testset.json";
    auto& c = f.config;
    c.corpus = dir / "corpus.json";
    c.concepts = dir / "concepts.json";
    c.activations = dir / "activations.json";
    c.embeddings = dir / "embeddings.json";
    c.audio_embeddings = dir / "audio_embeddings.json";
    c.out = dir / "dossiers";
    c.hashing_dim = kEmbeddingDim;
    c.clusters = 4;
    c.cache = dir / "llm_cache.jsonl";
    c.llm.mode = LlmMode::replay;
    return f;
}

DeskFixture generate_desk_fixture(const fs::path& dir, std::uint64_t seed) {
    fs::create_directories(dir / "wav");
    DeskFixture f = desk_fixture_paths(dir);
    f.config.seed = seed;
    const auto& captions = desk_captions();
    const PlantedSpec spec;
    const int n_classes = static_cast<int>(spec.class_names.size());

    // Corpus, waveforms and network inputs, classes interleaved.
    std::vector<ProbeClip> clips;
    MatrixXd inputs = MatrixXd::Zero(n_classes * kClipsPerClass, n_classes + spec.noise_dims);
    Rng rng(derive_seed(seed, 1));
    for (int i = 0; i < n_classes * kClipsPerClass; ++i) {
        const int c = i % n_classes, v = i / n_classes;
        char id[16];
        std::snprintf(id, sizeof id, "clip%02d", i);
        const fs::path wav = dir / "wav" / (std::string(id) + ".wav");
        write_wav(desk_waveform(c, v, seed), wav);
        clips.push_back({id, captions[static_cast<std::size_t>(c)][static_cast<std::size_t>(v)],
                         spec.class_names[static_cast<std::size_t>(c)], wav.string(), kSampleRate});
        inputs(i, c) = 0.6 + 0.8 * rng.uniform();
        for (int d = 0; d < spec.noise_dims; ++d) inputs(i, n_classes + d) = rng.normal();
    }
    const ProbeCorpus corpus(clips, spec.class_names);
    save_corpus(corpus, f.config.corpus);
    save_concepts(ConceptSet(desk_concepts()), f.config.concepts);

    // Activations: every unit of both layers.
    const FeedForwardNet net = planted_network(spec);
    save_network(net, f.net);
    save_labeled_set(planted_samples(spec, 20, derive_seed(seed, 2)), f.testset);
    ActivationMatrix acts;
    acts.reduction = Reduction::scalar;
    {
        const MatrixXd hidden = [&] {
            MatrixXd z = inputs * net.layers[0].weights.transpose();
            z.rowwise() += net.layers[0].bias.transpose();
            return MatrixXd(z.cwiseMax(0.0));
        }();
        MatrixXd logits = hidden * net.layers[1].weights.transpose();
        logits.rowwise() += net.layers[1].bias.transpose();
        acts.values.resize(hidden.cols() + logits.cols(), hidden.rows());
        acts.values << hidden.transpose(), logits.transpose();
        for (int u = 0; u < hidden.cols(); ++u) acts.neurons.push_back({"fc1", 0, u});
        for (int u = 0; u < logits.cols(); ++u) acts.neurons.push_back({"out", 1, u});
        // f32 storage; round now so the in-memory copy matches the file.
        acts.values = acts.values.cast<float>().cast<double>();
    }
    save_activations(acts, f.config.activations, "activations.andt");

    // Caption/concept text embeddings and audio embeddings from the hashed encoder.
    const HashingEmbedder encoder(kEmbeddingDim, seed);
    std::vector<std::string> keys;
    for (const auto& clip : clips) keys.push_back(clip.id);
    for (const auto& c : desk_concepts()) keys.push_back(c);
    MatrixXd text(static_cast<Eigen::Index>(keys.size()), kEmbeddingDim), audio(static_cast<Eigen::Index>(clips.size()), kEmbeddingDim);
    Rng noise(derive_seed(seed, 3));
    for (std::size_t i = 0; i < clips.size(); ++i) {
        text.row(static_cast<Eigen::Index>(i)) = encoder.embed(clips[i].caption).transpose();
        VectorXd a = encoder.embed(*clips[i].label);
        for (Eigen::Index d = 0; d < a.size(); ++d) a(d) += 0.05 * noise.normal();
        audio.row(static_cast<Eigen::Index>(i)) = normalized(a).transpose();
    }
    for (std::size_t m = 0; m < desk_concepts().size(); ++m)
        text.row(static_cast<Eigen::Index>(clips.size() + m)) = encoder.embed(desk_concepts()[m]).transpose();
    text = text.cast<float>().cast<double>();
    audio = audio.cast<float>().cast<double>();
    save_embeddings(EmbeddingMatrix(text, keys, false), f.config.embeddings, "embeddings.andt");
    std::vector<std::string> audio_keys(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(clips.size()));
    save_embeddings(EmbeddingMatrix(audio, audio_keys, false), *f.config.audio_embeddings, "audio_embeddings.andt");

    // Record the replay cache with the scripted model, single-threaded so the
    // cache file order is stable.
    fs::remove(*f.config.cache);
    DissectConfig record = f.config;
    record.llm.mode = LlmMode::live;
    record.threads = 1;
    {
        LlmClient client = make_llm_client(record, std::make_shared<FunctionTransport>(scripted_llm_reply));
        const DissectInputs in = load_dissect_inputs(record);
        run_dissect(in, record, client);
    }
    return f;
}

}  // namespace netdissect
