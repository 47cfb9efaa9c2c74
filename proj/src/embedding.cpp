#include "netdissect/embedding.hpp"

#include "netdissect/error.hpp"
#include "netdissect/random.hpp"
#include "netdissect/text.hpp"

#include <set>

namespace netdissect {

MatrixXd TextEmbedder::embed_all(const std::vector<std::string>& texts) const {
    MatrixXd out(static_cast<Eigen::Index>(texts.size()), dim());
    for (std::size_t i = 0; i < texts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = embed(texts[i]).transpose();
    return out;
}

LookupEmbedder::LookupEmbedder(EmbeddingMatrix matrix, std::shared_ptr<const TextEmbedder> fallback)
    : matrix_(std::move(matrix)), fallback_(std::move(fallback)) {
    if (fallback_ && fallback_->dim() != matrix_.dim())
        throw invalid_argument("fallback embedder dim " + std::to_string(fallback_->dim()) + " != matrix dim " +
                               std::to_string(matrix_.dim()));
}

VectorXd LookupEmbedder::embed(const std::string& text) const {
    if (auto idx = matrix_.find(text)) return matrix_.values().row(*idx).transpose();
    if (fallback_) return fallback_->embed(text);
    throw format_error("missing embedding row for \"" + text + "\"");
}

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ull ^ mix_seed(seed);
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return mix_seed(h);
}

}  // namespace

HashingEmbedder::HashingEmbedder(Eigen::Index dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ < 1) throw invalid_argument("embedding dim must be >= 1");
}

VectorXd HashingEmbedder::embed(const std::string& text) const {
    VectorXd v = VectorXd::Zero(dim_);
    const auto toks = text::word_tokens(text);
    auto add = [&](std::string_view feature, double weight) {
        const std::uint64_t h = fnv1a(feature, seed_);
        const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
        v[bucket] += ((h >> 63) != 0 ? -weight : weight);
    };
    for (std::size_t i = 0; i < toks.size(); ++i) {
        add(toks[i], 1.0);
        if (i + 1 < toks.size()) add(toks[i] + ' ' + toks[i + 1], 0.5);
    }
    const double n = v.norm();
    if (n > 0.0) v /= n;
    return v;
}

EmbeddingMatrix embed_texts(const TextEmbedder& embedder, const std::vector<std::string>& texts) {
    std::vector<std::string> keys;
    std::set<std::string> seen;
    for (const auto& t : texts)
        if (seen.insert(t).second) keys.push_back(t);
    MatrixXd values = embedder.embed_all(keys);
    bool normalized = true;
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        if (std::abs(values.row(i).norm() - 1.0) > 1e-6) normalized = false;
    return EmbeddingMatrix(std::move(values), std::move(keys), normalized);
}

}  // namespace netdissect
