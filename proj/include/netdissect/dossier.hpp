#pragma once

#include "netdissect/activation_select.hpp"
#include "netdissect/concept_scoring.hpp"
#include "netdissect/interpretability.hpp"
#include "netdissect/llm_client.hpp"
#include "netdissect/open_concepts.hpp"
#include "netdissect/summarize_calibrate.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace netdissect {

/// Everything the engine learned about one neuron.
struct NeuronDossier {
    std::string neuron_id;
    NeuronMeta meta;
    ExtremeSelection selection;
    std::vector<std::string> high_clip_ids;
    std::vector<std::string> low_clip_ids;
    Summary summary_high;
    Summary summary_low;
    CalibratedSummary calibrated;
    std::optional<ConceptAssignment> closed_db;
    std::optional<ConceptAssignment> closed_tab;
    std::optional<IclResult> closed_icl;
    std::map<PosClass, std::set<std::string>> open_sets;
    PosCounts pos_counts;
    std::optional<InterpretabilityLabel> label;

    /// Open set of one class; empty when never extracted.
    const std::set<std::string>& open_set(PosClass p) const;
    /// Union over every extracted class.
    std::set<std::string> all_open_words() const;
};

nlohmann::json to_json(const NeuronDossier& d);
NeuronDossier dossier_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ConceptAssignment& a);
ConceptAssignment assignment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const InterpretabilityLabel& l);
InterpretabilityLabel label_from_json(const nlohmann::json& j);

/// Summary-module fragment: {"neuron_id","S_h","S_l","S_h_c","removed"}.
nlohmann::json calibration_fragment(const NeuronDossier& d);

/// One "<sanitized id>.json" per neuron plus "index.json" listing them in
/// order. Output is byte-stable for equal inputs.
void write_dossier_directory(const std::vector<NeuronDossier>& dossiers, const nlohmann::json& config,
                             const std::filesystem::path& dir);
std::vector<NeuronDossier> read_dossier_directory(const std::filesystem::path& dir);

}  // namespace netdissect
