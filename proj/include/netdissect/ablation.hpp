#pragma once

#include "netdissect/concept_scoring.hpp"
#include "netdissect/corpus.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace netdissect {

struct NeuronDossier;

// ---------------------------------------------------------------------------
// Toy evaluable network
// ---------------------------------------------------------------------------

enum class Activation { relu, gelu, identity };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct DenseLayer {
    std::string name;
    MatrixXd weights;  // out x in
    VectorXd bias;
    Activation activation = Activation::identity;

    Eigen::Index in_dim() const { return weights.cols(); }
    Eigen::Index out_dim() const { return weights.rows(); }
};

struct FeedForwardNet {
    std::vector<DenseLayer> layers;
    std::vector<std::string> class_names;

    /// Throws on broken dim chaining, duplicate layer names, or an output
    /// width that differs from the class count.
    void validate() const;
    Eigen::Index in_dim() const;
    std::size_t layer_index(const std::string& name) const;
};

/// Manifest: {"class_names":[...], "layers":[{"name","activation","weights","bias"}]}
/// with weights/bias stored as TensorFiles next to the manifest.
FeedForwardNet load_network(const std::filesystem::path& manifest_path);
void save_network(const FeedForwardNet& net, const std::filesystem::path& manifest_path);

using UnitRef = std::pair<std::string, int>;  // (layer, unit)

/// Every unit of every layer except the output layer, in layer/unit order.
std::vector<UnitRef> hidden_pool(const FeedForwardNet& net);

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

enum class MaskProvenance { ocp, closed_top3, pos_rank, per_adjective, random };

std::string to_string(MaskProvenance p);
MaskProvenance parse_mask_provenance(const std::string& s);

struct MaskSpec {
    std::set<UnitRef> entries;
    MaskProvenance provenance = MaskProvenance::ocp;
    std::optional<std::uint64_t> seed;

    bool empty() const { return entries.empty(); }
    /// Throws when an entry names a missing layer or an out-of-range unit.
    void validate(const FeedForwardNet& net) const;
};

nlohmann::json to_json(const MaskSpec& m);
MaskSpec mask_from_json(const nlohmann::json& j);
void save_mask(const MaskSpec& m, const std::filesystem::path& path);
MaskSpec load_mask(const std::filesystem::path& path);

/// A network with an accumulated set of zeroed units. Applying the same
/// mask twice, or a mask split into parts, gives the same function.
class MaskedNetwork {
public:
    explicit MaskedNetwork(const FeedForwardNet& net);

    MaskedNetwork& apply(const MaskSpec& mask);
    std::size_t masked_count() const;

    /// Logits for each row of `inputs` (samples x in_dim).
    MatrixXd logits(const MatrixXd& inputs) const;
    VectorXd logits(const VectorXd& x) const;

private:
    const FeedForwardNet* net_;
    std::vector<std::vector<bool>> off_;  // per layer, per unit
};

struct ForwardResult {
    VectorXd logits;
    VectorXd confidences;  // softmax of logits
};

ForwardResult forward(const FeedForwardNet& net, const VectorXd& x, const MaskSpec* mask = nullptr);

/// Row-wise numerically stable softmax.
MatrixXd softmax_rows(const MatrixXd& logits);

/// Copy of `net` whose masked units contribute nothing downstream: their
/// outgoing weights are zeroed (and, for output units, their row and bias).
FeedForwardNet zero_outgoing_weights(const FeedForwardNet& net, const MaskSpec& mask);

// ---------------------------------------------------------------------------
// Neuron selection
// ---------------------------------------------------------------------------

/// Content lemmas of a target concept: lowercased word tokens minus stop words.
std::vector<std::string> target_lemmas(const std::string& target);

/// Neurons whose open-set words contain every content lemma of `target`.
MaskSpec select_neurons_ocp(const std::vector<NeuronDossier>& dossiers, const std::string& target);

/// Neurons whose top-3 closed-set list contains `target` exactly.
MaskSpec select_neurons_closed(const std::vector<ConceptAssignment>& assignments, const std::string& target);

// ---------------------------------------------------------------------------
// Unlearning experiment
// ---------------------------------------------------------------------------

struct LabeledSet {
    MatrixXd inputs;          // samples x in_dim
    std::vector<int> labels;  // class index per sample

    std::size_t size() const { return labels.size(); }
};

/// Manifest {"inputs": tensor, "labels": [...]} next to a TensorFile.
LabeledSet load_labeled_set(const std::filesystem::path& manifest_path);
void save_labeled_set(const LabeledSet& set, const std::filesystem::path& manifest_path);

struct ClassUnlearning {
    std::string class_name;
    int pruned_count = 0;
    double delta_A = 0.0;
    double delta_R = 0.0;
};

struct UnlearningReport {
    std::string method;
    std::vector<ClassUnlearning> per_class;
    double avg_pruned = 0.0;
    double mean_delta_A = 0.0;
    double mean_delta_R = 0.0;
    /// mean_delta_R - mean_delta_A: how much more the target class lost
    /// than the rest did. Positive means the concept was selectively removed.
    double gap = 0.0;
};

nlohmann::json to_json(const UnlearningReport& r);

/// Confidence of each sample's true class, in percentage points.
VectorXd true_class_confidence(const MatrixXd& logits, const std::vector<int>& labels);

/// Report from precomputed confidences. `after` has one row per class
/// (the run that ablated that class) and one column per sample.
UnlearningReport unlearning_from_confidences(const VectorXd& before, const MatrixXd& after,
                                             const std::vector<int>& labels,
                                             const std::vector<std::string>& class_names,
                                             const std::vector<int>& pruned_counts, std::string method);

/// Report from extractor logit dumps: `before` is samples x classes,
/// `after` is classes x samples x classes, and the label JSON holds
/// {"labels", "class_names", "pruned"}.
UnlearningReport unlearning_from_logit_dumps(const std::filesystem::path& before, const std::filesystem::path& after,
                                             const std::filesystem::path& labels_json, std::string method);

using MaskForClass = std::function<MaskSpec(std::size_t class_index, const std::string& class_name)>;

UnlearningReport run_unlearning_experiment(const FeedForwardNet& net, const LabeledSet& test,
                                           const MaskForClass& mask_for_class, std::string method);

/// `n` units drawn uniformly from `pool` for each class, with an
/// independent stream per class derived from `seed`.
MaskForClass random_masks(std::vector<UnitRef> pool, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Feature-importance ablation
// ---------------------------------------------------------------------------

enum class PosCriterion { nouns, adjectives, verbs, prepositions, summary_length, basic_adjectives, highlevel_adjectives };

std::string to_string(PosCriterion c);
PosCriterion parse_pos_criterion(const std::string& s);

int pos_criterion_count(const NeuronDossier& d, PosCriterion c);

/// Neurons by descending criterion count; ties by (layer, unit).
std::vector<UnitRef> rank_by_pos_count(const std::vector<NeuronDossier>& dossiers, PosCriterion criterion);

/// Top-1 accuracy, argmax ties resolved to the lower class index.
double accuracy(const MaskedNetwork& net, const LabeledSet& eval);

/// Masks the first floor(r% * pool_size) ranked units and evaluates.
double ablate_top_fraction(const FeedForwardNet& net, const std::vector<UnitRef>& ranking, std::size_t pool_size,
                           double r, const LabeledSet& eval);

/// Masks up to floor(r% * pool_size) units from `eligible`; when there are
/// more eligible units than that, draws them uniformly per seed. Returns the
/// mean accuracy over seeds.
double ablate_subsample(const FeedForwardNet& net, const std::vector<UnitRef>& eligible, std::size_t pool_size,
                        double r, const std::vector<std::uint64_t>& seeds, const LabeledSet& eval);

}  // namespace netdissect
