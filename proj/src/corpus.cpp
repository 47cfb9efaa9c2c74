#include "netdissect/corpus.hpp"

#include "netdissect/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace netdissect {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'N', 'D', 'T'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw format_error(path.string() + ": " + e.what());
    }
}

void write_json(const json& doc, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

fs::path resolve(const fs::path& manifest, const std::string& rel) {
    fs::path p(rel);
    return p.is_absolute() ? p : manifest.parent_path() / p;
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t Tensor::numel() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, std::uint64_t d) { return a * static_cast<std::size_t>(d); });
}

std::size_t Tensor::rows() const {
    if (dims.empty()) return 0;
    return dims.size() == 1 ? 1 : static_cast<std::size_t>(dims[0]);
}

std::size_t Tensor::cols() const {
    if (dims.empty()) return 0;
    std::size_t c = 1;
    for (std::size_t i = dims.size() == 1 ? 0 : 1; i < dims.size(); ++i) c *= static_cast<std::size_t>(dims[i]);
    return c;
}

Tensor Tensor::from_matrix(const Eigen::Ref<const Eigen::MatrixXf>& m) {
    Tensor t;
    t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    t.data.resize(static_cast<std::size_t>(m.size()));
    Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.data.data(), m.rows(),
                                                                                      m.cols()) = m;
    return t;
}

Tensor Tensor::from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    return from_matrix(Eigen::MatrixXf(m.cast<float>()));
}

Eigen::MatrixXf Tensor::to_matrixf() const {
    const auto r = static_cast<Eigen::Index>(rows());
    const auto c = static_cast<Eigen::Index>(cols());
    return Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data.data(), r, c);
}

Eigen::MatrixXd Tensor::to_matrixd() const { return to_matrixf().cast<double>(); }

void save_tensor(const Tensor& tensor, const fs::path& path) {
    if (tensor.dims.empty()) throw invalid_argument("tensor must have ndim >= 1");
    if (tensor.dims.size() > 255) throw invalid_argument("tensor ndim exceeds 255");
    if (tensor.data.size() != tensor.numel())
        throw invalid_argument("tensor payload size " + std::to_string(tensor.data.size()) +
                               " does not match dims product " + std::to_string(tensor.numel()));
    for (std::size_t i = 0; i < tensor.data.size(); ++i)
        if (!std::isfinite(tensor.data[i]))
            throw invalid_argument("non-finite value at flat index " + std::to_string(i));

    std::string buf(kMagic.begin(), kMagic.end());
    put_le<std::uint16_t>(buf, kVersion);
    put_le<std::uint8_t>(buf, kDtypeF32);
    put_le<std::uint8_t>(buf, static_cast<std::uint8_t>(tensor.dims.size()));
    for (auto d : tensor.dims) put_le<std::uint64_t>(buf, d);
    buf.reserve(buf.size() + 4 * tensor.data.size());
    for (float f : tensor.data) put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(f));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw io_error("write failed: " + path.string());
}

Tensor load_tensor(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();

    constexpr std::size_t kFixed = 4 + 2 + 1 + 1;
    if (n < kFixed) throw format_error(path.string() + ": truncated header");
    if (std::memcmp(p, kMagic.data(), 4) != 0) throw format_error(path.string() + ": bad magic");
    if (get_le<std::uint16_t>(p + 4) != kVersion)
        throw format_error(path.string() + ": unsupported version " + std::to_string(get_le<std::uint16_t>(p + 4)));
    if (p[6] != kDtypeF32) throw format_error(path.string() + ": unsupported dtype " + std::to_string(p[6]));
    const std::size_t ndim = p[7];
    if (n < kFixed + 8 * ndim) throw format_error(path.string() + ": truncated header");

    Tensor t;
    for (std::size_t i = 0; i < ndim; ++i) t.dims.push_back(get_le<std::uint64_t>(p + kFixed + 8 * i));
    const std::size_t offset = kFixed + 8 * ndim;
    const std::size_t expected = 4 * t.numel();
    if (n - offset < expected)
        throw format_error(path.string() + ": truncated payload (" + std::to_string(n - offset) + " of " +
                           std::to_string(expected) + " bytes)");
    if (n - offset > expected) throw format_error(path.string() + ": trailing bytes after payload");
    t.data.resize(t.numel());
    for (std::size_t i = 0; i < t.data.size(); ++i)
        t.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + offset + 4 * i));
    return t;
}

// ---------------------------------------------------------------------------

ProbeCorpus::ProbeCorpus(std::vector<ProbeClip> clips, std::vector<std::string> class_names)
    : clips_(std::move(clips)), class_names_(std::move(class_names)) {
    const std::set<std::string> classes(class_names_.begin(), class_names_.end());
    for (std::size_t i = 0; i < clips_.size(); ++i) {
        const auto& c = clips_[i];
        if (!index_.emplace(c.id, i).second) throw format_error("duplicate clip id \"" + c.id + "\"");
        if (trim(c.caption).empty()) throw format_error("empty caption for clip \"" + c.id + "\"");
        if (c.label && !classes.contains(*c.label))
            throw format_error("clip \"" + c.id + "\" has label \"" + *c.label + "\" not in class_names");
    }
}

std::size_t ProbeCorpus::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw invalid_argument("unknown clip id \"" + id + "\"");
    return it->second;
}

std::string normalize_concept(const std::string& s) {
    std::string out;
    bool space = false;
    for (unsigned char ch : trim(s)) {
        if (std::isspace(ch)) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(ch)));
    }
    return out;
}

ConceptSet::ConceptSet(std::vector<std::string> concepts) : concepts_(std::move(concepts)) {
    if (concepts_.empty()) throw format_error("concept set must contain at least one concept");
    std::set<std::string> seen;
    for (const auto& c : concepts_) {
        auto n = normalize_concept(c);
        if (n.empty()) throw format_error("empty concept");
        if (!seen.insert(n).second) throw format_error("duplicate concept \"" + c + "\"");
    }
}

std::optional<std::size_t> ConceptSet::find(const std::string& name) const {
    const auto n = normalize_concept(name);
    for (std::size_t i = 0; i < concepts_.size(); ++i)
        if (normalize_concept(concepts_[i]) == n) return i;
    return std::nullopt;
}

ProbeCorpus load_corpus(const fs::path& manifest_path) {
    const json doc = read_json(manifest_path);
    std::vector<std::string> class_names;
    if (doc.contains("class_names")) class_names = doc.at("class_names").get<std::vector<std::string>>();
    if (!doc.contains("clips") || !doc.at("clips").is_array())
        throw format_error(manifest_path.string() + ": missing \"clips\" array");
    std::vector<ProbeClip> clips;
    for (const auto& j : doc.at("clips")) {
        ProbeClip c;
        c.id = j.at("id").get<std::string>();
        c.caption = j.at("caption").get<std::string>();
        if (j.contains("label") && !j.at("label").is_null()) c.label = j.at("label").get<std::string>();
        if (j.contains("waveform_path") && !j.at("waveform_path").is_null())
            c.waveform_path = resolve(manifest_path, j.at("waveform_path").get<std::string>()).string();
        if (j.contains("sample_rate") && !j.at("sample_rate").is_null()) c.sample_rate = j.at("sample_rate").get<double>();
        clips.push_back(std::move(c));
    }
    return ProbeCorpus(std::move(clips), std::move(class_names));
}

void save_corpus(const ProbeCorpus& corpus, const fs::path& manifest_path) {
    json clips = json::array();
    for (const auto& c : corpus.clips()) {
        json j = {{"id", c.id}, {"caption", c.caption}};
        if (c.label) j["label"] = *c.label;
        if (c.waveform_path) {
            const fs::path w = fs::absolute(*c.waveform_path);
            const fs::path rel = w.lexically_relative(fs::absolute(manifest_path).parent_path());
            j["waveform_path"] = (rel.empty() ? w : rel).generic_string();
        }
        if (c.sample_rate) j["sample_rate"] = *c.sample_rate;
        clips.push_back(std::move(j));
    }
    json doc = {{"clips", clips}};
    if (!corpus.class_names().empty()) doc["class_names"] = corpus.class_names();
    write_json(doc, manifest_path);
}

ConceptSet load_concepts(const fs::path& path) {
    const json doc = read_json(path);
    if (!doc.contains("concepts")) throw format_error(path.string() + ": missing \"concepts\"");
    return ConceptSet(doc.at("concepts").get<std::vector<std::string>>());
}

void save_concepts(const ConceptSet& concepts, const fs::path& path) {
    write_json(json{{"concepts", concepts.concepts()}}, path);
}

// ---------------------------------------------------------------------------

std::string to_string(Reduction r) {
    switch (r) {
        case Reduction::mean_over_tokens: return "mean_over_tokens";
        case Reduction::max_over_tokens: return "max_over_tokens";
        case Reduction::scalar: return "scalar";
    }
    return "scalar";
}

Reduction parse_reduction(const std::string& s) {
    if (s == "mean_over_tokens") return Reduction::mean_over_tokens;
    if (s == "max_over_tokens") return Reduction::max_over_tokens;
    if (s == "scalar") return Reduction::scalar;
    throw format_error("unknown reduction \"" + s + "\"");
}

std::string NeuronMeta::id() const { return layer_name + "#" + std::to_string(unit_index); }

std::pair<std::string, int> parse_neuron_id(const std::string& id) {
    const auto pos = id.rfind('#');
    if (pos == std::string::npos || pos + 1 >= id.size()) throw invalid_argument("malformed neuron id \"" + id + "\"");
    try {
        return {id.substr(0, pos), std::stoi(id.substr(pos + 1))};
    } catch (const std::exception&) {
        throw invalid_argument("malformed neuron id \"" + id + "\"");
    }
}

void ActivationMatrix::validate(std::size_t corpus_size) const {
    if (static_cast<std::size_t>(values.rows()) != neurons.size())
        throw format_error("activation rows (" + std::to_string(values.rows()) + ") != neuron count (" +
                           std::to_string(neurons.size()) + ")");
    if (static_cast<std::size_t>(values.cols()) != corpus_size)
        throw format_error("activation columns (" + std::to_string(values.cols()) + ") != corpus size (" +
                           std::to_string(corpus_size) + ")");
    if (!values.allFinite()) throw format_error("activation matrix contains non-finite values");
    std::set<std::string> ids;
    for (const auto& n : neurons) {
        if (n.block_index < 0 || n.unit_index < 0) throw format_error("negative block/unit index for " + n.id());
        if (!ids.insert(n.id()).second) throw format_error("duplicate neuron " + n.id());
    }
}

ActivationMatrix load_activations(const fs::path& manifest_path) {
    const json doc = read_json(manifest_path);
    ActivationMatrix acts;
    acts.reduction = parse_reduction(doc.value("reduction", std::string("mean_over_tokens")));
    for (const auto& j : doc.at("neurons"))
        acts.neurons.push_back({j.at("layer").get<std::string>(), j.at("block").get<int>(), j.at("unit").get<int>()});
    const Tensor t = load_tensor(resolve(manifest_path, doc.at("tensor").get<std::string>()));
    if (t.dims.size() != 2) throw format_error("activation tensor must be 2-D");
    acts.values = t.to_matrixd();
    if (static_cast<std::size_t>(acts.values.rows()) != acts.neurons.size())
        throw format_error("activation rows (" + std::to_string(acts.values.rows()) + ") != neuron count (" +
                           std::to_string(acts.neurons.size()) + ")");
    return acts;
}

void save_activations(const ActivationMatrix& acts, const fs::path& manifest_path, const std::string& tensor_name) {
    save_tensor(Tensor::from_matrix(acts.values), manifest_path.parent_path() / tensor_name);
    json neurons = json::array();
    for (const auto& n : acts.neurons) neurons.push_back({{"layer", n.layer_name}, {"block", n.block_index}, {"unit", n.unit_index}});
    write_json({{"tensor", tensor_name}, {"reduction", to_string(acts.reduction)}, {"neurons", neurons}}, manifest_path);
}

EmbeddingMatrix::EmbeddingMatrix(MatrixXd values, std::vector<std::string> row_keys, bool normalized)
    : values_(std::move(values)), row_keys_(std::move(row_keys)), normalized_(normalized) {
    if (static_cast<std::size_t>(values_.rows()) != row_keys_.size())
        throw format_error("embedding rows (" + std::to_string(values_.rows()) + ") != row_keys (" +
                           std::to_string(row_keys_.size()) + ")");
    if (!values_.allFinite()) throw format_error("embedding matrix contains non-finite values");
    for (std::size_t i = 0; i < row_keys_.size(); ++i) {
        if (!index_.emplace(row_keys_[i], static_cast<Eigen::Index>(i)).second)
            throw format_error("duplicate embedding row key \"" + row_keys_[i] + "\"");
        if (normalized_) {
            const double norm = values_.row(static_cast<Eigen::Index>(i)).norm();
            if (std::abs(norm - 1.0) > 1e-4)
                throw format_error("embedding row \"" + row_keys_[i] + "\" has norm " + std::to_string(norm) +
                                   " but matrix is flagged normalized");
        }
    }
}

std::optional<Eigen::Index> EmbeddingMatrix::find(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

VectorXd EmbeddingMatrix::row(const std::string& key) const {
    auto idx = find(key);
    if (!idx) throw format_error("missing embedding row for \"" + key + "\"");
    return values_.row(*idx).transpose();
}

MatrixXd EmbeddingMatrix::gather(const std::vector<std::string>& keys) const {
    MatrixXd out(static_cast<Eigen::Index>(keys.size()), values_.cols());
    for (std::size_t i = 0; i < keys.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = row(keys[i]).transpose();
    return out;
}

EmbeddingMatrix load_embeddings(const fs::path& manifest_path) {
    const json doc = read_json(manifest_path);
    const Tensor t = load_tensor(resolve(manifest_path, doc.at("tensor").get<std::string>()));
    if (t.dims.size() != 2) throw format_error("embedding tensor must be 2-D");
    return EmbeddingMatrix(t.to_matrixd(), doc.at("row_keys").get<std::vector<std::string>>(),
                           doc.value("normalized", false));
}

void save_embeddings(const EmbeddingMatrix& emb, const fs::path& manifest_path, const std::string& tensor_name) {
    save_tensor(Tensor::from_matrix(emb.values()), manifest_path.parent_path() / tensor_name);
    write_json({{"tensor", tensor_name}, {"row_keys", emb.row_keys()}, {"normalized", emb.normalized()}}, manifest_path);
}

}  // namespace netdissect
