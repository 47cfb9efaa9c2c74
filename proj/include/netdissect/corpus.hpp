#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace netdissect {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

// ---------------------------------------------------------------------------
// Tensor files
//
// Layout (all integers little-endian):
//   "ANDT" | u16 version=1 | u8 dtype=0 (f32) | u8 ndim | ndim x u64 dims |
//   row-major f32 payload
// ---------------------------------------------------------------------------

struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<float> data;

    std::size_t numel() const;

    /// Rows/cols of a tensor viewed as 2-D. A 1-D tensor is a single row.
    std::size_t rows() const;
    std::size_t cols() const;

    static Tensor from_matrix(const Eigen::Ref<const Eigen::MatrixXf>& m);
    static Tensor from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m);
    Eigen::MatrixXf to_matrixf() const;
    Eigen::MatrixXd to_matrixd() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

void save_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Probing corpus and concept set
// ---------------------------------------------------------------------------

struct ProbeClip {
    std::string id;
    std::string caption;
    std::optional<std::string> label;
    std::optional<std::string> waveform_path;
    std::optional<double> sample_rate;
};

class ProbeCorpus {
public:
    ProbeCorpus() = default;
    ProbeCorpus(std::vector<ProbeClip> clips, std::vector<std::string> class_names);

    std::size_t size() const { return clips_.size(); }
    const std::vector<ProbeClip>& clips() const { return clips_; }
    const ProbeClip& clip(std::size_t index) const { return clips_.at(index); }
    const std::vector<std::string>& class_names() const { return class_names_; }

    /// Canonical index of a clip id; throws when unknown.
    std::size_t index_of(const std::string& id) const;

private:
    std::vector<ProbeClip> clips_;
    std::vector<std::string> class_names_;
    std::unordered_map<std::string, std::size_t> index_;
};

class ConceptSet {
public:
    ConceptSet() = default;
    explicit ConceptSet(std::vector<std::string> concepts);

    std::size_t size() const { return concepts_.size(); }
    const std::vector<std::string>& concepts() const { return concepts_; }
    const std::string& operator[](std::size_t i) const { return concepts_.at(i); }

    /// Index of the concept whose normalized form equals normalize(name).
    std::optional<std::size_t> find(const std::string& name) const;

private:
    std::vector<std::string> concepts_;
};

/// Lowercase + trim + collapse internal whitespace.
std::string normalize_concept(const std::string& s);

ProbeCorpus load_corpus(const std::filesystem::path& manifest_path);
ConceptSet load_concepts(const std::filesystem::path& path);
void save_corpus(const ProbeCorpus& corpus, const std::filesystem::path& manifest_path);
void save_concepts(const ConceptSet& concepts, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Activations and embeddings
// ---------------------------------------------------------------------------

enum class Reduction { mean_over_tokens, max_over_tokens, scalar };

std::string to_string(Reduction r);
Reduction parse_reduction(const std::string& s);

struct NeuronMeta {
    std::string layer_name;
    int block_index = 0;
    int unit_index = 0;

    /// "<layer_name>#<unit_index>"
    std::string id() const;
};

/// Splits a canonical neuron id back into (layer, unit).
std::pair<std::string, int> parse_neuron_id(const std::string& id);

struct ActivationMatrix {
    MatrixXd values;  // neurons x N
    std::vector<NeuronMeta> neurons;
    Reduction reduction = Reduction::mean_over_tokens;

    std::size_t num_neurons() const { return neurons.size(); }
    void validate(std::size_t corpus_size) const;
};

class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(MatrixXd values, std::vector<std::string> row_keys, bool normalized);

    const MatrixXd& values() const { return values_; }
    const std::vector<std::string>& row_keys() const { return row_keys_; }
    bool normalized() const { return normalized_; }
    Eigen::Index dim() const { return values_.cols(); }
    Eigen::Index rows() const { return values_.rows(); }

    std::optional<Eigen::Index> find(const std::string& key) const;
    /// Row for `key`; throws a format error naming the key when absent.
    VectorXd row(const std::string& key) const;
    /// Stacks rows for `keys` in order.
    MatrixXd gather(const std::vector<std::string>& keys) const;

private:
    MatrixXd values_;
    std::vector<std::string> row_keys_;
    bool normalized_ = false;
    std::unordered_map<std::string, Eigen::Index> index_;
};

ActivationMatrix load_activations(const std::filesystem::path& manifest_path);
void save_activations(const ActivationMatrix& acts, const std::filesystem::path& manifest_path,
                      const std::string& tensor_name);
EmbeddingMatrix load_embeddings(const std::filesystem::path& manifest_path);
void save_embeddings(const EmbeddingMatrix& emb, const std::filesystem::path& manifest_path,
                     const std::string& tensor_name);

}  // namespace netdissect
