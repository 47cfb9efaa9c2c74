#include "netdissect/ablation.hpp"

#include "netdissect/dossier.hpp"
#include "netdissect/error.hpp"
#include "netdissect/parallel.hpp"
#include "netdissect/random.hpp"
#include "netdissect/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace netdissect {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& manifest, const std::string& rel) {
    fs::path p(rel);
    return p.is_absolute() ? p : manifest.parent_path() / p;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw format_error(path.string() + ": " + e.what());
    }
}

void write_json(const json& j, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void activate(MatrixXd& h, Activation a) {
    switch (a) {
        case Activation::relu:
            h = h.cwiseMax(0.0);
            break;
        case Activation::gelu:
            h = h.unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); });
            break;
        case Activation::identity:
            break;
    }
}

// Plural-insensitive comparison key; open sets hold surface lemmas.
std::string lemma_key(std::string w) {
    w = text::to_lower(w);
    if (w.size() > 4 && w.ends_with("ies")) return w.substr(0, w.size() - 3) + "y";
    if (w.size() > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is"))
        return w.substr(0, w.size() - 1);
    return w;
}

std::size_t cap_for(double r, std::size_t pool_size) {
    if (!(r >= 0.0 && r <= 100.0)) throw invalid_argument("r must be within [0, 100]");
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(pool_size) / 100.0 + 1e-9));
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::gelu: return "gelu";
        case Activation::identity: return "identity";
    }
    return "identity";
}

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "gelu") return Activation::gelu;
    if (s == "identity") return Activation::identity;
    throw invalid_argument("unknown activation '" + s + "'");
}

void FeedForwardNet::validate() const {
    if (layers.empty()) throw invalid_argument("network has no layers");
    std::set<std::string> names;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (!names.insert(l.name).second) throw invalid_argument("duplicate layer name '" + l.name + "'");
        if (l.bias.size() != l.out_dim())
            throw invalid_argument("layer '" + l.name + "': bias length does not match output width");
        if (i > 0 && l.in_dim() != layers[i - 1].out_dim())
            throw invalid_argument("layer '" + l.name + "': input width " + std::to_string(l.in_dim()) +
                                   " does not match previous output width " + std::to_string(layers[i - 1].out_dim()));
    }
    if (static_cast<std::size_t>(layers.back().out_dim()) != class_names.size())
        throw invalid_argument("output width " + std::to_string(layers.back().out_dim()) + " != class count " +
                               std::to_string(class_names.size()));
}

Eigen::Index FeedForwardNet::in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }

std::size_t FeedForwardNet::layer_index(const std::string& name) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].name == name) return i;
    throw invalid_argument("no layer named '" + name + "'");
}

FeedForwardNet load_network(const fs::path& manifest_path) {
    const json doc = read_json(manifest_path);
    FeedForwardNet net;
    try {
        net.class_names = doc.at("class_names").get<std::vector<std::string>>();
        for (const auto& l : doc.at("layers")) {
            DenseLayer layer;
            layer.name = l.at("name").get<std::string>();
            layer.activation = parse_activation(l.value("activation", std::string("identity")));
            const Tensor w = load_tensor(resolve(manifest_path, l.at("weights").get<std::string>()));
            const Tensor b = load_tensor(resolve(manifest_path, l.at("bias").get<std::string>()));
            if (w.dims.size() != 2) throw format_error("layer '" + layer.name + "': weights must be 2-D");
            layer.weights = w.to_matrixd();
            layer.bias = b.to_matrixd().reshaped();
            net.layers.push_back(std::move(layer));
        }
    } catch (const json::exception& e) {
        throw format_error(manifest_path.string() + ": " + e.what());
    }
    net.validate();
    return net;
}

void save_network(const FeedForwardNet& net, const fs::path& manifest_path) {
    net.validate();
    if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
    const auto stem = manifest_path.stem().string();
    json layers = json::array();
    for (const auto& l : net.layers) {
        const auto w = stem + "." + l.name + ".weight.andt";
        const auto b = stem + "." + l.name + ".bias.andt";
        save_tensor(Tensor::from_matrix(l.weights), manifest_path.parent_path() / w);
        Tensor bias = Tensor::from_matrix(MatrixXd(l.bias));
        bias.dims = {static_cast<std::uint64_t>(l.bias.size())};
        save_tensor(bias, manifest_path.parent_path() / b);
        layers.push_back({{"name", l.name}, {"activation", to_string(l.activation)}, {"weights", w}, {"bias", b}});
    }
    write_json({{"class_names", net.class_names}, {"layers", layers}}, manifest_path);
}

std::vector<UnitRef> hidden_pool(const FeedForwardNet& net) {
    std::vector<UnitRef> pool;
    for (std::size_t i = 0; i + 1 < net.layers.size(); ++i)
        for (Eigen::Index u = 0; u < net.layers[i].out_dim(); ++u) pool.emplace_back(net.layers[i].name, static_cast<int>(u));
    return pool;
}

// ---------------------------------------------------------------------------

std::string to_string(MaskProvenance p) {
    switch (p) {
        case MaskProvenance::ocp: return "ocp";
        case MaskProvenance::closed_top3: return "closed_top3";
        case MaskProvenance::pos_rank: return "pos_rank";
        case MaskProvenance::per_adjective: return "per_adjective";
        case MaskProvenance::random: return "random";
    }
    return "ocp";
}

MaskProvenance parse_mask_provenance(const std::string& s) {
    for (auto p : {MaskProvenance::ocp, MaskProvenance::closed_top3, MaskProvenance::pos_rank,
                   MaskProvenance::per_adjective, MaskProvenance::random})
        if (to_string(p) == s) return p;
    throw invalid_argument("unknown mask provenance '" + s + "'");
}

void MaskSpec::validate(const FeedForwardNet& net) const {
    for (const auto& [layer, unit] : entries) {
        const auto& l = net.layers[net.layer_index(layer)];
        if (unit < 0 || unit >= l.out_dim())
            throw invalid_argument("mask entry " + layer + "#" + std::to_string(unit) + " is out of range");
    }
}

json to_json(const MaskSpec& m) {
    json entries = json::array();
    for (const auto& [layer, unit] : m.entries) entries.push_back({{"layer", layer}, {"unit", unit}});
    json j = {{"provenance", to_string(m.provenance)}, {"entries", entries}};
    if (m.seed) j["seed"] = *m.seed;
    return j;
}

MaskSpec mask_from_json(const json& j) {
    MaskSpec m;
    try {
        m.provenance = parse_mask_provenance(j.at("provenance").get<std::string>());
        if (j.contains("seed") && !j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& e : j.at("entries")) m.entries.emplace(e.at("layer").get<std::string>(), e.at("unit").get<int>());
    } catch (const json::exception& e) {
        throw format_error(std::string("mask: ") + e.what());
    }
    return m;
}

void save_mask(const MaskSpec& m, const fs::path& path) { write_json(to_json(m), path); }
MaskSpec load_mask(const fs::path& path) { return mask_from_json(read_json(path)); }

// ---------------------------------------------------------------------------

MaskedNetwork::MaskedNetwork(const FeedForwardNet& net) : net_(&net) {
    net.validate();
    for (const auto& l : net.layers) off_.emplace_back(static_cast<std::size_t>(l.out_dim()), false);
}

MaskedNetwork& MaskedNetwork::apply(const MaskSpec& mask) {
    mask.validate(*net_);
    for (const auto& [layer, unit] : mask.entries) off_[net_->layer_index(layer)][static_cast<std::size_t>(unit)] = true;
    return *this;
}

std::size_t MaskedNetwork::masked_count() const {
    std::size_t n = 0;
    for (const auto& l : off_) n += static_cast<std::size_t>(std::count(l.begin(), l.end(), true));
    return n;
}

MatrixXd MaskedNetwork::logits(const MatrixXd& inputs) const {
    if (inputs.cols() != net_->in_dim())
        throw invalid_argument("input width " + std::to_string(inputs.cols()) + " != network input width " +
                               std::to_string(net_->in_dim()));
    MatrixXd h = inputs;
    for (std::size_t i = 0; i < net_->layers.size(); ++i) {
        const auto& l = net_->layers[i];
        MatrixXd z = h * l.weights.transpose();
        z.rowwise() += l.bias.transpose();
        activate(z, l.activation);
        for (std::size_t u = 0; u < off_[i].size(); ++u)
            if (off_[i][u]) z.col(static_cast<Eigen::Index>(u)).setZero();
        h = std::move(z);
    }
    return h;
}

VectorXd MaskedNetwork::logits(const VectorXd& x) const { return logits(MatrixXd(x.transpose())).row(0).transpose(); }

MatrixXd softmax_rows(const MatrixXd& logits) {
    MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        const auto e = (logits.row(r).array() - m).exp();
        out.row(r) = e / e.sum();
    }
    return out;
}

ForwardResult forward(const FeedForwardNet& net, const VectorXd& x, const MaskSpec* mask) {
    MaskedNetwork m(net);
    if (mask) m.apply(*mask);
    ForwardResult r;
    r.logits = m.logits(x);
    r.confidences = softmax_rows(MatrixXd(r.logits.transpose())).row(0).transpose();
    return r;
}

FeedForwardNet zero_outgoing_weights(const FeedForwardNet& net, const MaskSpec& mask) {
    mask.validate(net);
    FeedForwardNet out = net;
    for (const auto& [layer, unit] : mask.entries) {
        const auto i = net.layer_index(layer);
        if (i + 1 < out.layers.size()) {
            out.layers[i + 1].weights.col(unit).setZero();
        } else {
            out.layers[i].weights.row(unit).setZero();
            out.layers[i].bias(unit) = 0.0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> target_lemmas(const std::string& target) {
    std::vector<std::string> out;
    for (auto& w : text::word_tokens(target))
        if (!is_stop_word(w)) out.push_back(w);
    if (out.empty()) out = text::word_tokens(target);
    return out;
}

MaskSpec select_neurons_ocp(const std::vector<NeuronDossier>& dossiers, const std::string& target) {
    std::vector<std::string> want;
    for (const auto& w : target_lemmas(target)) want.push_back(lemma_key(w));
    MaskSpec m;
    m.provenance = MaskProvenance::ocp;
    if (want.empty()) return m;
    for (const auto& d : dossiers) {
        std::set<std::string> have;
        for (const auto& w : d.all_open_words())
            for (const auto& part : text::word_tokens(w)) have.insert(lemma_key(part));
        if (std::all_of(want.begin(), want.end(), [&](const std::string& w) { return have.contains(w); }))
            m.entries.emplace(d.meta.layer_name, d.meta.unit_index);
    }
    return m;
}

MaskSpec select_neurons_closed(const std::vector<ConceptAssignment>& assignments, const std::string& target) {
    MaskSpec m;
    m.provenance = MaskProvenance::closed_top3;
    for (const auto& a : assignments) {
        const auto n = std::min<std::size_t>(3, a.ranked_concepts.size());
        for (std::size_t i = 0; i < n; ++i)
            if (a.ranked_concepts[i].first == target) {
                m.entries.insert(parse_neuron_id(a.neuron_id));
                break;
            }
    }
    return m;
}

// ---------------------------------------------------------------------------

LabeledSet load_labeled_set(const fs::path& manifest_path) {
    const json doc = read_json(manifest_path);
    LabeledSet s;
    try {
        s.inputs = load_tensor(resolve(manifest_path, doc.at("inputs").get<std::string>())).to_matrixd();
        s.labels = doc.at("labels").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw format_error(manifest_path.string() + ": " + e.what());
    }
    if (static_cast<std::size_t>(s.inputs.rows()) != s.labels.size())
        throw format_error(manifest_path.string() + ": " + std::to_string(s.inputs.rows()) + " inputs but " +
                           std::to_string(s.labels.size()) + " labels");
    return s;
}

void save_labeled_set(const LabeledSet& set, const fs::path& manifest_path) {
    if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
    const auto tensor = manifest_path.stem().string() + ".inputs.andt";
    save_tensor(Tensor::from_matrix(set.inputs), manifest_path.parent_path() / tensor);
    write_json({{"inputs", tensor}, {"labels", set.labels}}, manifest_path);
}

json to_json(const UnlearningReport& r) {
    json per_class = json::array();
    for (const auto& c : r.per_class)
        per_class.push_back({{"class", c.class_name}, {"pruned", c.pruned_count}, {"delta_A", c.delta_A}, {"delta_R", c.delta_R}});
    return {{"method", r.method},     {"Avg", r.avg_pruned}, {"delta_A", r.mean_delta_A},
            {"delta_R", r.mean_delta_R}, {"gap", r.gap},       {"per_class", per_class}};
}

VectorXd true_class_confidence(const MatrixXd& logits, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw invalid_argument("logit rows do not match label count");
    const MatrixXd p = softmax_rows(logits);
    VectorXd out(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= p.cols()) throw invalid_argument("label " + std::to_string(y) + " out of range");
        out(i) = 100.0 * p(i, y);
    }
    return out;
}

UnlearningReport unlearning_from_confidences(const VectorXd& before, const MatrixXd& after, const std::vector<int>& labels,
                                             const std::vector<std::string>& class_names,
                                             const std::vector<int>& pruned_counts, std::string method) {
    const auto n_classes = class_names.size();
    if (static_cast<std::size_t>(after.rows()) != n_classes || pruned_counts.size() != n_classes)
        throw invalid_argument("per-class inputs do not match the class count");
    if (static_cast<std::size_t>(before.size()) != labels.size() || after.cols() != before.size())
        throw invalid_argument("confidence vectors do not match the sample count");

    UnlearningReport r;
    r.method = std::move(method);
    for (std::size_t c = 0; c < n_classes; ++c) {
        double sum_a = 0.0, sum_r = 0.0;
        int n_a = 0, n_r = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const double d = after(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) - before(static_cast<Eigen::Index>(i));
            if (labels[i] == static_cast<int>(c)) {
                sum_a += d;
                ++n_a;
            } else {
                sum_r += d;
                ++n_r;
            }
        }
        if (n_a == 0) throw invalid_argument("class '" + class_names[c] + "' has no test samples");
        r.per_class.push_back({class_names[c], pruned_counts[c], sum_a / n_a, n_r ? sum_r / n_r : 0.0});
    }
    for (const auto& c : r.per_class) {
        r.avg_pruned += c.pruned_count;
        r.mean_delta_A += c.delta_A;
        r.mean_delta_R += c.delta_R;
    }
    const auto n = static_cast<double>(n_classes);
    r.avg_pruned /= n;
    r.mean_delta_A /= n;
    r.mean_delta_R /= n;
    r.gap = r.mean_delta_R - r.mean_delta_A;
    return r;
}

UnlearningReport unlearning_from_logit_dumps(const fs::path& before, const fs::path& after, const fs::path& labels_json,
                                             std::string method) {
    const json meta = read_json(labels_json);
    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::vector<int> pruned;
    try {
        labels = meta.at("labels").get<std::vector<int>>();
        class_names = meta.at("class_names").get<std::vector<std::string>>();
        pruned = meta.at("pruned").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw format_error(labels_json.string() + ": " + e.what());
    }
    const Tensor tb = load_tensor(before);
    const Tensor ta = load_tensor(after);
    const auto n = labels.size(), c = class_names.size();
    if (tb.dims != std::vector<std::uint64_t>{n, c})
        throw format_error(before.string() + ": expected shape [" + std::to_string(n) + ", " + std::to_string(c) + "]");
    if (ta.dims != std::vector<std::uint64_t>{c, n, c})
        throw format_error(after.string() + ": expected shape [" + std::to_string(c) + ", " + std::to_string(n) + ", " +
                           std::to_string(c) + "]");
    const VectorXd conf_before = true_class_confidence(tb.to_matrixd(), labels);
    MatrixXd conf_after(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < c; ++k) {
        MatrixXd logits(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) logits(i, j) = ta.data[(k * n + i) * c + j];
        conf_after.row(k) = true_class_confidence(logits, labels).transpose();
    }
    return unlearning_from_confidences(conf_before, conf_after, labels, class_names, pruned, std::move(method));
}

UnlearningReport run_unlearning_experiment(const FeedForwardNet& net, const LabeledSet& test,
                                           const MaskForClass& mask_for_class, std::string method) {
    const auto n_classes = net.class_names.size();
    const VectorXd before = true_class_confidence(MaskedNetwork(net).logits(test.inputs), test.labels);
    MatrixXd after(static_cast<Eigen::Index>(n_classes), before.size());
    std::vector<int> pruned(n_classes);
    parallel_for(n_classes, [&](std::size_t c) {
        const MaskSpec mask = mask_for_class(c, net.class_names[c]);
        MaskedNetwork m(net);
        m.apply(mask);
        pruned[c] = static_cast<int>(mask.entries.size());
        after.row(static_cast<Eigen::Index>(c)) = true_class_confidence(m.logits(test.inputs), test.labels).transpose();
    });
    return unlearning_from_confidences(before, after, test.labels, net.class_names, pruned, std::move(method));
}

MaskForClass random_masks(std::vector<UnitRef> pool, std::size_t n, std::uint64_t seed) {
    return [pool = std::move(pool), n, seed](std::size_t class_index, const std::string&) {
        Rng rng(derive_seed(seed, class_index));
        MaskSpec m;
        m.provenance = MaskProvenance::random;
        m.seed = seed;
        for (auto i : rng.sample_without_replacement(pool.size(), n)) m.entries.insert(pool[i]);
        return m;
    };
}

// ---------------------------------------------------------------------------

std::string to_string(PosCriterion c) {
    switch (c) {
        case PosCriterion::nouns: return "nouns";
        case PosCriterion::adjectives: return "adjectives";
        case PosCriterion::verbs: return "verbs";
        case PosCriterion::prepositions: return "prepositions";
        case PosCriterion::summary_length: return "summary_length";
        case PosCriterion::basic_adjectives: return "basic_adjectives";
        case PosCriterion::highlevel_adjectives: return "highlevel_adjectives";
    }
    return "nouns";
}

PosCriterion parse_pos_criterion(const std::string& s) {
    for (auto c : {PosCriterion::nouns, PosCriterion::adjectives, PosCriterion::verbs, PosCriterion::prepositions,
                   PosCriterion::summary_length, PosCriterion::basic_adjectives, PosCriterion::highlevel_adjectives})
        if (to_string(c) == s) return c;
    throw invalid_argument("unknown criterion '" + s + "'");
}

int pos_criterion_count(const NeuronDossier& d, PosCriterion c) {
    const auto& pc = d.pos_counts;
    auto tokens = [&](PosClass p) {
        auto it = pc.tokens.find(p);
        return it == pc.tokens.end() ? 0 : it->second;
    };
    switch (c) {
        case PosCriterion::nouns: return tokens(PosClass::noun);
        case PosCriterion::adjectives: return tokens(PosClass::adjective);
        case PosCriterion::verbs: return tokens(PosClass::verb);
        case PosCriterion::prepositions: return tokens(PosClass::preposition);
        case PosCriterion::summary_length: return pc.summary_length;
        case PosCriterion::basic_adjectives: return pc.basic_adjectives;
        case PosCriterion::highlevel_adjectives: return pc.highlevel_adjectives;
    }
    return 0;
}

std::vector<UnitRef> rank_by_pos_count(const std::vector<NeuronDossier>& dossiers, PosCriterion criterion) {
    std::vector<std::pair<int, UnitRef>> keyed;
    keyed.reserve(dossiers.size());
    for (const auto& d : dossiers) keyed.emplace_back(pos_criterion_count(d, criterion), UnitRef{d.meta.layer_name, d.meta.unit_index});
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<UnitRef> out;
    for (auto& [_, u] : keyed) out.push_back(std::move(u));
    return out;
}

double accuracy(const MaskedNetwork& net, const LabeledSet& eval) {
    if (eval.size() == 0) throw invalid_argument("empty evaluation set");
    const MatrixXd logits = net.logits(eval.inputs);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        if (best == eval.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(eval.size());
}

double ablate_top_fraction(const FeedForwardNet& net, const std::vector<UnitRef>& ranking, std::size_t pool_size, double r,
                           const LabeledSet& eval) {
    const auto n = cap_for(r, pool_size);
    if (n > 0 && ranking.empty()) throw invalid_argument("empty ranking with r > 0");
    MaskSpec mask;
    mask.provenance = MaskProvenance::pos_rank;
    for (std::size_t i = 0; i < std::min(n, ranking.size()); ++i) mask.entries.insert(ranking[i]);
    MaskedNetwork m(net);
    m.apply(mask);
    return accuracy(m, eval);
}

double ablate_subsample(const FeedForwardNet& net, const std::vector<UnitRef>& eligible, std::size_t pool_size, double r,
                        const std::vector<std::uint64_t>& seeds, const LabeledSet& eval) {
    if (seeds.empty()) throw invalid_argument("at least one seed is required");
    const auto n = cap_for(r, pool_size);
    std::vector<double> acc(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t s) {
        MaskSpec mask;
        mask.provenance = MaskProvenance::per_adjective;
        mask.seed = seeds[s];
        if (eligible.size() <= n) {
            mask.entries.insert(eligible.begin(), eligible.end());
        } else {
            Rng rng(derive_seed(seeds[s], 0));
            for (auto i : rng.sample_without_replacement(eligible.size(), n)) mask.entries.insert(eligible[i]);
        }
        MaskedNetwork m(net);
        m.apply(mask);
        acc[s] = accuracy(m, eval);
    });
    double sum = 0.0;
    for (double a : acc) sum += a;
    return sum / static_cast<double>(acc.size());
}

}  // namespace netdissect
