// netdissect: command-line front end for the dissection engine.

#include "netdissect/ablation.hpp"
#include "netdissect/audiostats.hpp"
#include "netdissect/error.hpp"
#include "netdissect/fixtures.hpp"
#include "netdissect/open_concepts.hpp"
#include "netdissect/parallel.hpp"
#include "netdissect/pipeline.hpp"
#include "netdissect/summarize_calibrate.hpp"
#include "netdissect/text.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace netdissect;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    out << body;
}

void write_json_file(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Every option of a subcommand with its effective value.
json resolved_options(const CLI::App& app) {
    json j = json::object();
    for (const CLI::Option* opt : app.get_options()) {
        if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
        std::string name = opt->get_name();
        while (!name.empty() && name.front() == '-') name.erase(name.begin());
        if (opt->count() > 0) {
            const auto& r = opt->results();
            j[name] = r.size() == 1 ? json(r.front()) : json(r);
        } else if (!opt->get_default_str().empty()) {
            j[name] = opt->get_default_str();
        } else {
            j[name] = nullptr;
        }
    }
    return j;
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        item = text::trim(item);
        if (item.empty()) continue;
        std::istringstream is(item);
        T v;
        if (!(is >> v) || !is.eof()) throw invalid_argument("cannot parse list item '" + item + "'");
        out.push_back(v);
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

struct Options {
    DissectConfig cfg;
    std::string mode = "text_rule";
    std::string method = "wpmi";
    std::string llm_mode = "replay";
    std::optional<double> soft_temp;
    std::optional<int> rank_pool;

    fs::path net, testset, dossiers, before, after, labels;
    std::string unlearn_method = "ocp";
    int random_n = 0;
    std::string criterion = "adjectives";
    std::string adjective;
    std::string r_list = "0,5,10,20,30,50";
    std::string seeds = "0,1,2";
    std::string word = "loud";
    std::string stat = "amplitude";
    std::string source = "DB";
    bool icl = false;
    bool emit_masks = false;
    std::optional<std::string> layer;

    void finish() {
        cfg.mode = parse_interpretability_mode(mode);
        if (method != "all") cfg.method = parse_similarity_method(method);
        cfg.llm.mode = parse_llm_mode(llm_mode);
        cfg.params.soft_temp = soft_temp;
        cfg.params.rank_pool = rank_pool;
    }
};

void add_inputs(CLI::App* app, Options& o, bool embeddings) {
    app->add_option("--corpus", o.cfg.corpus, "probe corpus manifest")->required();
    app->add_option("--activations", o.cfg.activations, "activation manifest")->required();
    if (embeddings) {
        app->add_option("--concepts", o.cfg.concepts, "concept set JSON")->required();
        app->add_option("--embeddings", o.cfg.embeddings, "caption and concept embedding manifest")->required();
        app->add_option("--audio-embeddings", o.cfg.audio_embeddings, "audio embedding manifest (TAB)");
    }
    app->add_option("--sentence-embeddings", o.cfg.sentence_embeddings, "sentence embedding manifest");
    app->add_option("--hashing-dim", o.cfg.hashing_dim, "width of the hashed fallback encoder")->capture_default_str();
    app->add_option("--seed", o.cfg.seed, "global seed")->capture_default_str();
    app->add_option("--threads", o.cfg.threads, "worker threads (0 = all cores)")->capture_default_str();
}

void add_scoring(CLI::App* app, Options& o) {
    app->add_option("--k", o.cfg.k, "top-K clips per neuron")->capture_default_str();
    app->add_option("--method", o.method, "cos|cos_cubed|rank_reorder|wpmi|soft_wpmi")->capture_default_str();
    app->add_option("--gamma", o.cfg.params.gamma, "softmax inverse temperature")->capture_default_str();
    app->add_option("--lambda", o.cfg.params.lambda, "WPMI penalty weight")->capture_default_str();
    app->add_option("--soft-temp", o.soft_temp, "softWPMI temperature (default std of u)");
    app->add_option("--rank-pool", o.rank_pool, "rank-reorder pool size (default K)");
    app->add_option("--top-n", o.cfg.top_n, "closed-set concepts kept per neuron")->capture_default_str();
}

void add_llm(CLI::App* app, Options& o) {
    app->add_option("--llm-mode", o.llm_mode, "live|replay|mock")->capture_default_str();
    app->add_option("--llm-url", o.cfg.llm.endpoint_url, "chat-completions endpoint")->capture_default_str();
    app->add_option("--llm-model", o.cfg.llm.model_id, "model id")->capture_default_str();
    app->add_option("--cache", o.cfg.cache, "completion cache (JSON lines)");
    app->add_option("--icl-shots", o.cfg.icl_shots, "ICL exemplars (0 disables ICL)")->capture_default_str();
}

void add_clustering(CLI::App* app, Options& o) {
    app->add_option("--tau", o.cfg.tau, "interpretability threshold (0 disables)")->capture_default_str();
    app->add_option("--mode", o.mode, "text_rule|multiset_rule")->capture_default_str();
    app->add_option("--clusters", o.cfg.clusters, "k-means clusters (0 = elbow)")->capture_default_str();
}

// ---------------------------------------------------------------------------

void write_adjective_tables(const std::vector<NeuronDossier>& dossiers, const fs::path& dir) {
    std::string dist = "word,count\n";
    for (const auto& [w, n] : adjective_distribution(dossiers, dossiers.size() * 64)) dist += w + "," + std::to_string(n) + "\n";
    write_text(dir / "adjectives.csv", dist);
    std::string blocks = "block,mean_adjectives\n";
    for (const auto& [b, m] : adjectives_per_block(dossiers)) blocks += std::to_string(b) + "," + fmt(m) + "\n";
    write_text(dir / "adjectives_per_block.csv", blocks);
}

int cmd_dissect(Options& o) {
    o.finish();
    const DissectInputs in = load_dissect_inputs(o.cfg);
    LlmClient client = make_llm_client(o.cfg);
    const auto dossiers = run_dissect(in, o.cfg, client);
    write_dossier_directory(dossiers, to_json(o.cfg), o.cfg.out);
    write_adjective_tables(dossiers, o.cfg.out);
    std::cout << "wrote " << dossiers.size() << " dossiers to " << o.cfg.out.string() << "\n";
    return 0;
}

int cmd_eval_last_layer(Options& o, const json& config) {
    o.finish();
    const DissectInputs in = load_dissect_inputs(o.cfg);
    const auto& acts = in.activations;
    const std::string layer = o.layer.value_or(acts.neurons.back().layer_name);
    const auto rows = selected_neurons(acts, {layer});
    const auto& classes = in.corpus.class_names();
    std::vector<std::string> truth;
    for (auto r : rows) {
        const auto unit = static_cast<std::size_t>(acts.neurons[r].unit_index);
        if (unit >= classes.size()) throw invalid_argument("output unit " + acts.neurons[r].id() + " has no class name");
        if (!in.concepts.find(classes[unit])) throw invalid_argument("class '" + classes[unit] + "' is not in the concept set");
        truth.push_back(classes[unit]);
    }
    const auto source = parse_concept_source(o.source);
    if (source == ConceptSource::TAB && !in.audio_emb) throw invalid_argument("TAB needs --audio-embeddings");
    const ConceptScorer<double> scorer(
        build_concept_activation_matrix(source == ConceptSource::DB ? in.caption_emb : *in.audio_emb, in.concept_emb, source),
        o.cfg.params);

    std::vector<SimilarityMethod> methods;
    if (o.method == "all")
        methods = {SimilarityMethod::cos, SimilarityMethod::cos_cubed, SimilarityMethod::rank_reorder, SimilarityMethod::wpmi,
                   SimilarityMethod::soft_wpmi};
    else
        methods = {parse_similarity_method(o.method)};

    json reports = json::array();
    auto emit = [&](const LastLayerReport& rep, const std::string& name) {
        json per = json::array();
        for (const auto& p : rep.per_neuron)
            per.push_back({{"neuron_id", p.neuron_id}, {"predicted", p.predicted}, {"truth", p.truth}, {"cos", p.cos}});
        reports.push_back({{"method", name},
                           {"top1", rep.top1},
                           {"top5", rep.top5 ? json(*rep.top5) : json(nullptr)},
                           {"mean_cos", rep.mean_cos},
                           {"per_neuron", per}});
        std::cout << name << ": top1 " << fmt(rep.top1) << " top5 " << (rep.top5 ? fmt(*rep.top5) : "-") << " cos "
                  << fmt(rep.mean_cos) << "\n";
    };
    const int top_n = static_cast<int>(std::min<std::size_t>(5, in.concepts.size()));
    for (auto m : methods) {
        std::vector<ConceptAssignment> assignments(rows.size());
        parallel_for(rows.size(), [&](std::size_t i) {
            const VectorXd u = acts.values.row(static_cast<Eigen::Index>(rows[i])).transpose();
            assignments[i] = identify_closed_concept(scorer.score(u, m, o.cfg.k), in.concepts, top_n, acts.neurons[rows[i]].id(), m, source);
        }, o.cfg.threads);
        emit(evaluate_last_layer(assignments, truth, in.concept_rows), to_string(source) + "/" + to_string(m));
    }
    if (o.icl) {
        LlmClient client = make_llm_client(o.cfg);
        std::vector<ConceptAssignment> assignments(rows.size());
        parallel_for(rows.size(), [&](std::size_t i) {
            const auto id = acts.neurons[rows[i]].id();
            const VectorXd u = acts.values.row(static_cast<Eigen::Index>(rows[i])).transpose();
            const auto sel = select_extremes(u, o.cfg.k, id);
            std::vector<std::string> high, low;
            for (auto j : sel.high_indices) high.push_back(in.corpus.clip(j).caption);
            for (auto j : sel.low_indices) low.push_back(in.corpus.clip(j).caption);
            const auto cal = calibrate(summarize_descriptions(high, SummarySide::high, client, id),
                                       summarize_descriptions(low, SummarySide::low, client, id), *in.sentence_embedder, o.cfg.t);
            const auto summary = text::join(cal.points.empty() ? high : cal.points, " ");
            const auto r = icl_select_concept(summary, in.concepts, std::max(1, o.cfg.icl_shots), client, in.sentence_embedder.get());
            assignments[i] = {id, {{r.concept_name, 1.0}}, SimilarityMethod::cos, ConceptSource::DB};
        }, o.cfg.threads);
        emit(evaluate_last_layer(assignments, truth, in.concept_rows, false), "ICL");
    }
    write_json_file(o.cfg.out / "last_layer.json", {{"config", config}, {"reports", reports}});
    return 0;
}

int cmd_interpretability(Options& o, const json& config) {
    o.finish();
    if (o.cfg.tau < 1) throw invalid_argument("tau must be >= 1");
    const ProbeCorpus corpus = load_corpus(o.cfg.corpus);
    ActivationMatrix acts = load_activations(o.cfg.activations);
    acts.validate(corpus.size());
    const auto embedder = make_sentence_embedder(o.cfg.sentence_embeddings, o.cfg.hashing_dim, o.cfg.seed);
    const auto model = fit_sentence_clusters(corpus, *embedder, o.cfg);
    const auto rows = selected_neurons(acts, o.layer ? std::vector<std::string>{*o.layer} : std::vector<std::string>{});
    std::vector<InterpretabilityLabel> labels(rows.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        const auto id = acts.neurons[rows[i]].id();
        const VectorXd u = acts.values.row(static_cast<Eigen::Index>(rows[i])).transpose();
        std::vector<std::string> high;
        for (auto j : select_extremes(u, o.cfg.k, id).high_indices) high.push_back(corpus.clip(j).caption);
        labels[i] = classify_neuron(high, model, *embedder, o.cfg.tau, o.cfg.mode, id);
    }, o.cfg.threads);

    json out = json::array();
    for (const auto& l : labels) out.push_back(to_json(l));
    write_json_file(o.cfg.out / "labels.json", {{"config", config}, {"clusters", model.k}, {"labels", out}});
    std::vector<NeuronMeta> metas;
    for (auto r : rows) metas.push_back(acts.neurons[r]);
    std::string csv = "block,pct_uninterpretable\n";
    for (const auto& [b, pct] : block_uninterpretable_fraction(labels, metas)) csv += std::to_string(b) + "," + fmt(pct) + "\n";
    write_text(o.cfg.out / "per_block.csv", csv);
    std::cout << "clusters " << model.k << ", labeled " << labels.size() << " neurons\n";
    return 0;
}

int cmd_unlearn(Options& o, const json& config) {
    UnlearningReport report;
    if (!o.before.empty()) {
        report = unlearning_from_logit_dumps(o.before, o.after, o.labels, o.unlearn_method);
    } else {
        const FeedForwardNet net = load_network(o.net);
        const LabeledSet test = load_labeled_set(o.testset);
        MaskForClass masks;
        std::vector<NeuronDossier> dossiers;
        if (o.unlearn_method == "random") {
            if (o.random_n < 1) throw invalid_argument("random masks need --random-n >= 1");
            masks = random_masks(hidden_pool(net), static_cast<std::size_t>(o.random_n), o.cfg.seed);
        } else {
            dossiers = read_dossier_directory(o.dossiers);
            if (o.unlearn_method == "ocp") {
                masks = [&](std::size_t, const std::string& name) { return select_neurons_ocp(dossiers, name); };
            } else if (o.unlearn_method == "closed_db" || o.unlearn_method == "closed_tab") {
                std::vector<ConceptAssignment> assignments;
                for (const auto& d : dossiers) {
                    const auto& a = o.unlearn_method == "closed_db" ? d.closed_db : d.closed_tab;
                    if (a) assignments.push_back(*a);
                }
                if (assignments.empty()) throw invalid_argument("dossiers carry no " + o.unlearn_method + " assignments");
                masks = [assignments](std::size_t, const std::string& name) { return select_neurons_closed(assignments, name); };
            } else {
                throw invalid_argument("unknown unlearning method '" + o.unlearn_method + "'");
            }
        }
        if (o.emit_masks)
            for (std::size_t c = 0; c < net.class_names.size(); ++c)
                save_mask(masks(c, net.class_names[c]), o.cfg.out / "masks" / (text::sanitize_filename(net.class_names[c]) + ".json"));
        report = run_unlearning_experiment(net, test, masks, o.unlearn_method);
    }
    json j = to_json(report);
    j["config"] = config;
    write_json_file(o.cfg.out / "unlearning.json", j);
    std::cout << report.method << ": Avg " << fmt(report.avg_pruned) << " dA " << fmt(report.mean_delta_A) << " dR "
              << fmt(report.mean_delta_R) << " gap " << fmt(report.gap) << "\n";
    return 0;
}

int cmd_ablate(Options& o, const json& config) {
    const FeedForwardNet net = load_network(o.net);
    const LabeledSet eval = load_labeled_set(o.testset);
    const auto pool = hidden_pool(net);
    const auto rs = parse_list<double>(o.r_list);
    const auto seeds = parse_list<std::uint64_t>(o.seeds);
    std::vector<NeuronDossier> dossiers;
    if (o.criterion != "random") dossiers = read_dossier_directory(o.dossiers);
    const std::set<UnitRef> in_pool(pool.begin(), pool.end());

    std::string csv = "criterion,r,accuracy\n";
    for (double r : rs) {
        double acc;
        if (o.criterion == "random") {
            acc = ablate_subsample(net, pool, pool.size(), r, seeds, eval);
        } else if (o.criterion == "per_adjective") {
            if (o.adjective.empty()) throw invalid_argument("per_adjective needs --adjective");
            std::vector<UnitRef> eligible;
            for (const auto& d : dossiers) {
                const UnitRef u{d.meta.layer_name, d.meta.unit_index};
                if (in_pool.contains(u) && d.open_set(PosClass::adjective).contains(o.adjective)) eligible.push_back(u);
            }
            acc = ablate_subsample(net, eligible, pool.size(), r, seeds, eval);
        } else {
            std::vector<UnitRef> ranking;
            for (auto& u : rank_by_pos_count(dossiers, parse_pos_criterion(o.criterion)))
                if (in_pool.contains(u)) ranking.push_back(std::move(u));
            acc = ablate_top_fraction(net, ranking, pool.size(), r, eval);
        }
        const std::string label = o.criterion == "per_adjective" ? "adjective:" + o.adjective : o.criterion;
        csv += label + "," + fmt(r) + "," + fmt(acc) + "\n";
        std::cout << label << " r=" << fmt(r) << " accuracy " << fmt(acc) << "\n";
    }
    write_text(o.cfg.out / "ablation.csv", csv);
    write_json_file(o.cfg.out / "config.json", config);
    return 0;
}

int cmd_audiostats(Options& o, const json& config) {
    const ProbeCorpus corpus = load_corpus(o.cfg.corpus);
    const auto dossiers = read_dossier_directory(o.dossiers);
    const auto stats = neuron_audio_stats(dossiers, corpus);
    write_audio_stats_csv(stats, o.cfg.out / "audiostats.csv");
    const auto g = group_stats_by_word(dossiers, stats, o.word, parse_audio_stat(o.stat));
    json j = {{"config", config},
              {"word", o.word},
              {"stat", o.stat},
              {"with", g.with_word ? json(*g.with_word) : json(nullptr)},
              {"without", g.without_word ? json(*g.without_word) : json(nullptr)},
              {"n_with", g.n_with},
              {"n_without", g.n_without}};
    write_json_file(o.cfg.out / "groups.json", j);
    std::cout << o.stat << " '" << o.word << "': with " << (g.with_word ? fmt(*g.with_word) : "n/a") << " (" << g.n_with
              << "), without " << (g.without_word ? fmt(*g.without_word) : "n/a") << " (" << g.n_without << ")\n";
    return 0;
}

int run(int argc, char** argv) {
    CLI::App app{"Neuron dissection engine"};
    app.require_subcommand(1);
    Options o;

    auto* dissect = app.add_subcommand("dissect", "dossier JSON per neuron");
    add_inputs(dissect, o, true);
    add_scoring(dissect, o);
    add_llm(dissect, o);
    add_clustering(dissect, o);
    dissect->add_option("--t", o.cfg.t, "calibration threshold")->capture_default_str();
    dissect->add_option("--layer", o.cfg.layers, "restrict to these layers");
    dissect->add_option("--out", o.cfg.out, "output directory")->required();

    auto* last = app.add_subcommand("eval-last-layer", "closed-set accuracy on output neurons");
    add_inputs(last, o, true);
    add_scoring(last, o);
    add_llm(last, o);
    last->add_option("--t", o.cfg.t, "calibration threshold for ICL summaries")->capture_default_str();
    last->add_option("--source", o.source, "DB|TAB")->capture_default_str();
    last->add_option("--layer", o.layer, "output layer (default: last)");
    last->add_flag("--icl", o.icl, "also evaluate ICL selection");
    last->add_option("--out", o.cfg.out, "output directory")->required();

    auto* interp = app.add_subcommand("interpretability", "interpretable/uninterpretable labels");
    add_inputs(interp, o, false);
    add_clustering(interp, o);
    interp->add_option("--k", o.cfg.k, "top-K clips per neuron")->capture_default_str();
    interp->add_option("--layer", o.layer, "restrict to one layer");
    interp->add_option("--out", o.cfg.out, "output directory")->required();

    auto* unlearn = app.add_subcommand("unlearn", "concept unlearning report");
    unlearn->add_option("--net", o.net, "network manifest");
    unlearn->add_option("--testset", o.testset, "labeled test set manifest");
    unlearn->add_option("--dossiers", o.dossiers, "dossier directory");
    unlearn->add_option("--method", o.unlearn_method, "ocp|closed_db|closed_tab|random")->capture_default_str();
    unlearn->add_option("--random-n", o.random_n, "units per random mask");
    unlearn->add_option("--seed", o.cfg.seed, "seed for random masks")->capture_default_str();
    unlearn->add_option("--before", o.before, "logit dump before masking");
    unlearn->add_option("--after", o.after, "per-class logit dumps after masking");
    unlearn->add_option("--labels", o.labels, "label JSON for logit dumps");
    unlearn->add_flag("--emit-masks", o.emit_masks, "write the MaskSpec of every class");
    unlearn->add_option("--out", o.cfg.out, "output directory")->required();

    auto* ablate = app.add_subcommand("ablate", "accuracy after pruning ranked neurons");
    ablate->add_option("--net", o.net, "network manifest")->required();
    ablate->add_option("--testset", o.testset, "labeled test set manifest")->required();
    ablate->add_option("--dossiers", o.dossiers, "dossier directory");
    ablate->add_option("--criterion", o.criterion,
                       "nouns|adjectives|verbs|prepositions|summary_length|basic_adjectives|highlevel_adjectives|per_adjective|random")
        ->capture_default_str();
    ablate->add_option("--adjective", o.adjective, "adjective for per_adjective");
    ablate->add_option("--r", o.r_list, "comma-separated percentages")->capture_default_str();
    ablate->add_option("--seeds", o.seeds, "comma-separated seeds")->capture_default_str();
    ablate->add_option("--out", o.cfg.out, "output directory")->required();

    auto* audio = app.add_subcommand("audiostats", "waveform statistics of top-K clips");
    audio->add_option("--corpus", o.cfg.corpus, "probe corpus manifest")->required();
    audio->add_option("--dossiers", o.dossiers, "dossier directory")->required();
    audio->add_option("--word", o.word, "open-set word to group by")->capture_default_str();
    audio->add_option("--stat", o.stat, "amplitude|mdf")->capture_default_str();
    audio->add_option("--out", o.cfg.out, "output directory")->required();

    auto* gen = app.add_subcommand("gen-fixtures", "write the synthetic desk-scale fixture");
    gen->add_option("--seed", o.cfg.seed, "fixture seed")->capture_default_str();
    gen->add_option("--out", o.cfg.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    if (dissect->parsed()) return cmd_dissect(o);
    if (last->parsed()) return cmd_eval_last_layer(o, resolved_options(*last));
    if (interp->parsed()) return cmd_interpretability(o, resolved_options(*interp));
    if (unlearn->parsed()) return cmd_unlearn(o, resolved_options(*unlearn));
    if (ablate->parsed()) return cmd_ablate(o, resolved_options(*ablate));
    if (audio->parsed()) return cmd_audiostats(o, resolved_options(*audio));
    if (gen->parsed()) {
        generate_desk_fixture(o.cfg.out, o.cfg.seed);
        std::cout << "wrote fixture to " << o.cfg.out.string() << "\n";
        return 0;
    }
    std::cerr << app.help();
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << "\n";
    } catch (const nlohmann::json::exception& e) {
        std::cerr << json{{"error", "format"}, {"message", e.what()}}.dump() << "\n";
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    }
    return 1;
}
