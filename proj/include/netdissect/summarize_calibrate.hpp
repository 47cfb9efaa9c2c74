#pragma once

#include "netdissect/embedding.hpp"
#include "netdissect/llm_client.hpp"

#include <string>
#include <vector>

namespace netdissect {

inline constexpr double kDefaultCalibrationThreshold = 0.7;

enum class SummarySide { high, low };

struct Summary {
    std::vector<std::string> points;
    SummarySide side = SummarySide::high;
    std::string neuron_id;
};

struct RemovedPoint {
    std::string point;
    std::string match;  ///< most similar point of the low summary
    double similarity = 0.0;
};

struct CalibratedSummary {
    std::vector<std::string> points;  ///< kept high-summary points, original order
    std::vector<RemovedPoint> removed;
};

/// Drops greeting and meta lines ("Sure", "Here is/are", "Certainly",
/// "As an AI", "I hope"). Numbered list items are never dropped; a greeting
/// line that carries an inline list keeps the list part.
std::string strip_boilerplate(const std::string& text);

/// Splits a completion into points: numbered items when present, then
/// bullet lines, otherwise sentences.
std::vector<std::string> parse_points(const std::string& completion);

Summary summarize_descriptions(const std::vector<std::string>& descriptions, SummarySide side, LlmClient& client,
                               std::string neuron_id = {});

/// Keeps a high point iff its best cosine against every low point is <= t.
CalibratedSummary calibrate(const Summary& high, const Summary& low, const TextEmbedder& sentence_embedder,
                            double t = kDefaultCalibrationThreshold);

}  // namespace netdissect
