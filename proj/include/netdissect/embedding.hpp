#pragma once

#include "netdissect/corpus.hpp"

#include <memory>
#include <string>
#include <vector>

namespace netdissect {

/// Maps texts to embedding rows. Implementations are immutable and safe to
/// share across threads.
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual Eigen::Index dim() const = 0;
    virtual VectorXd embed(const std::string& text) const = 0;

    MatrixXd embed_all(const std::vector<std::string>& texts) const;
};

/// Rows of a precomputed EmbeddingMatrix keyed by text. Misses go to the
/// fallback when one is configured, otherwise raise a format error.
class LookupEmbedder final : public TextEmbedder {
public:
    explicit LookupEmbedder(EmbeddingMatrix matrix, std::shared_ptr<const TextEmbedder> fallback = nullptr);

    Eigen::Index dim() const override { return matrix_.dim(); }
    VectorXd embed(const std::string& text) const override;
    const EmbeddingMatrix& matrix() const { return matrix_; }

private:
    EmbeddingMatrix matrix_;
    std::shared_ptr<const TextEmbedder> fallback_;
};

/// Deterministic bag-of-words encoder: each lowercased token (and each
/// adjacent token pair, at half weight) is hashed into a signed bucket;
/// the result is L2-normalized. Desk-scale stand-in for a sentence
/// encoder; texts sharing most words land close together.
class HashingEmbedder final : public TextEmbedder {
public:
    explicit HashingEmbedder(Eigen::Index dim = 256, std::uint64_t seed = 0);

    Eigen::Index dim() const override { return dim_; }
    VectorXd embed(const std::string& text) const override;

private:
    Eigen::Index dim_;
    std::uint64_t seed_;
};

/// Builds a normalized EmbeddingMatrix for `texts` (duplicates collapsed).
EmbeddingMatrix embed_texts(const TextEmbedder& embedder, const std::vector<std::string>& texts);

inline double cosine_similarity(const VectorXd& a, const VectorXd& b) {
    const double d = a.norm() * b.norm();
    return d > 0.0 ? a.dot(b) / d : 0.0;
}

}  // namespace netdissect
