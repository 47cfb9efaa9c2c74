#include "netdissect/dossier.hpp"

#include "netdissect/error.hpp"
#include "netdissect/text.hpp"

#include "json.hpp"

#include <fstream>

namespace netdissect {

using nlohmann::json;
namespace fs = std::filesystem;

const std::set<std::string>& NeuronDossier::open_set(PosClass p) const {
    static const std::set<std::string> empty;
    auto it = open_sets.find(p);
    return it == open_sets.end() ? empty : it->second;
}

std::set<std::string> NeuronDossier::all_open_words() const {
    std::set<std::string> out;
    for (const auto& [_, words] : open_sets) out.insert(words.begin(), words.end());
    return out;
}

json to_json(const ConceptAssignment& a) {
    json ranked = json::array();
    for (const auto& [c, s] : a.ranked_concepts) ranked.push_back({{"concept", c}, {"score", s}});
    return {{"neuron_id", a.neuron_id}, {"method", to_string(a.method)}, {"source", to_string(a.source)}, {"ranked", ranked}};
}

ConceptAssignment assignment_from_json(const json& j) {
    ConceptAssignment a;
    a.neuron_id = j.value("neuron_id", std::string());
    a.method = parse_similarity_method(j.at("method").get<std::string>());
    a.source = parse_concept_source(j.at("source").get<std::string>());
    for (const auto& r : j.at("ranked")) a.ranked_concepts.emplace_back(r.at("concept").get<std::string>(), r.at("score").get<double>());
    return a;
}

json to_json(const InterpretabilityLabel& l) {
    json support = json::object();
    for (const auto& [c, n] : l.support) support[std::to_string(c)] = n;
    json j = {{"neuron_id", l.neuron_id},
              {"label", l.interpretable ? "interpretable" : "uninterpretable"},
              {"mode", to_string(l.mode)},
              {"tau", l.tau},
              {"support", support}};
    if (l.warning) j["warning"] = *l.warning;
    return j;
}

InterpretabilityLabel label_from_json(const json& j) {
    InterpretabilityLabel l;
    l.neuron_id = j.at("neuron_id").get<std::string>();
    l.interpretable = j.at("label").get<std::string>() == "interpretable";
    l.mode = parse_interpretability_mode(j.at("mode").get<std::string>());
    l.tau = j.at("tau").get<int>();
    for (const auto& [c, n] : j.at("support").items()) l.support[std::stoi(c)] = n.get<int>();
    if (j.contains("warning")) l.warning = j.at("warning").get<std::string>();
    return l;
}

json calibration_fragment(const NeuronDossier& d) {
    json removed = json::array();
    for (const auto& r : d.calibrated.removed) removed.push_back({{"point", r.point}, {"match", r.match}, {"sim", r.similarity}});
    return {{"neuron_id", d.neuron_id},
            {"S_h", d.summary_high.points},
            {"S_l", d.summary_low.points},
            {"S_h_c", d.calibrated.points},
            {"removed", removed}};
}

json to_json(const NeuronDossier& d) {
    json j = calibration_fragment(d);
    j["layer"] = d.meta.layer_name;
    j["block"] = d.meta.block_index;
    j["unit"] = d.meta.unit_index;
    j["K"] = d.selection.k;
    j["I_h"] = d.selection.high_indices;
    j["I_l"] = d.selection.low_indices;
    j["I_h_ids"] = d.high_clip_ids;
    j["I_l_ids"] = d.low_clip_ids;
    json closed = json::object();
    if (d.closed_db) closed["DB"] = to_json(*d.closed_db);
    if (d.closed_tab) closed["TAB"] = to_json(*d.closed_tab);
    if (d.closed_icl)
        closed["ICL"] = {{"concept", d.closed_icl->concept_name},
                         {"match", to_string(d.closed_icl->match)},
                         {"raw_answer", d.closed_icl->raw_answer}};
    j["C_closed_set"] = closed;
    json open = json::object();
    for (const auto& [p, words] : d.open_sets) open[to_string(p)] = words;
    j["C_open_set"] = open;
    json tokens = json::object(), unique = json::object();
    for (const auto& [p, n] : d.pos_counts.tokens) tokens[to_string(p)] = n;
    for (const auto& [p, n] : d.pos_counts.unique) unique[to_string(p)] = n;
    j["pos_counts"] = {{"tokens", tokens},
                       {"unique", unique},
                       {"summary_length", d.pos_counts.summary_length},
                       {"basic_adjectives", d.pos_counts.basic_adjectives},
                       {"highlevel_adjectives", d.pos_counts.highlevel_adjectives}};
    j["interpretability"] = d.label ? to_json(*d.label) : json(nullptr);
    return j;
}

NeuronDossier dossier_from_json(const json& j) {
    NeuronDossier d;
    d.neuron_id = j.at("neuron_id").get<std::string>();
    d.meta = {j.at("layer").get<std::string>(), j.at("block").get<int>(), j.at("unit").get<int>()};
    d.selection.neuron_id = d.neuron_id;
    d.selection.k = j.value("K", 0);
    d.selection.high_indices = j.value("I_h", std::vector<std::size_t>{});
    d.selection.low_indices = j.value("I_l", std::vector<std::size_t>{});
    d.high_clip_ids = j.value("I_h_ids", std::vector<std::string>{});
    d.low_clip_ids = j.value("I_l_ids", std::vector<std::string>{});
    d.summary_high = {j.value("S_h", std::vector<std::string>{}), SummarySide::high, d.neuron_id};
    d.summary_low = {j.value("S_l", std::vector<std::string>{}), SummarySide::low, d.neuron_id};
    d.calibrated.points = j.value("S_h_c", std::vector<std::string>{});
    if (j.contains("removed"))
        for (const auto& r : j.at("removed"))
            d.calibrated.removed.push_back({r.at("point").get<std::string>(), r.at("match").get<std::string>(), r.at("sim").get<double>()});
    if (j.contains("C_closed_set")) {
        const auto& c = j.at("C_closed_set");
        if (c.contains("DB")) d.closed_db = assignment_from_json(c.at("DB"));
        if (c.contains("TAB")) d.closed_tab = assignment_from_json(c.at("TAB"));
        if (c.contains("ICL")) {
            const auto& icl = c.at("ICL");
            const auto m = icl.at("match").get<std::string>();
            d.closed_icl = IclResult{icl.at("concept").get<std::string>(),
                                     m == "exact" ? IclMatch::exact : m == "substring" ? IclMatch::substring : IclMatch::nearest,
                                     icl.value("raw_answer", std::string())};
        }
    }
    if (j.contains("C_open_set"))
        for (const auto& [p, words] : j.at("C_open_set").items())
            d.open_sets[parse_pos_class(p)] = words.get<std::set<std::string>>();
    if (j.contains("pos_counts")) {
        const auto& pc = j.at("pos_counts");
        for (const auto& [p, n] : pc.at("tokens").items()) d.pos_counts.tokens[parse_pos_class(p)] = n.get<int>();
        for (const auto& [p, n] : pc.at("unique").items()) d.pos_counts.unique[parse_pos_class(p)] = n.get<int>();
        d.pos_counts.summary_length = pc.value("summary_length", 0);
        d.pos_counts.basic_adjectives = pc.value("basic_adjectives", 0);
        d.pos_counts.highlevel_adjectives = pc.value("highlevel_adjectives", 0);
    }
    if (j.contains("interpretability") && !j.at("interpretability").is_null())
        d.label = label_from_json(j.at("interpretability"));
    return d;
}

void write_dossier_directory(const std::vector<NeuronDossier>& dossiers, const json& config, const fs::path& dir) {
    fs::create_directories(dir);
    json files = json::array();
    for (const auto& d : dossiers) {
        const auto name = text::sanitize_filename(d.neuron_id) + ".json";
        std::ofstream out(dir / name);
        if (!out) throw io_error("cannot write " + (dir / name).string());
        out << to_json(d).dump(2) << '\n';
        files.push_back({{"neuron_id", d.neuron_id}, {"file", name}});
    }
    std::ofstream idx(dir / "index.json");
    if (!idx) throw io_error("cannot write " + (dir / "index.json").string());
    idx << json{{"config", config}, {"dossiers", files}}.dump(2) << '\n';
}

std::vector<NeuronDossier> read_dossier_directory(const fs::path& dir) {
    std::ifstream idx(dir / "index.json");
    if (!idx) throw io_error("cannot open " + (dir / "index.json").string());
    const json index = json::parse(idx);
    std::vector<NeuronDossier> out;
    for (const auto& f : index.at("dossiers")) {
        std::ifstream in(dir / f.at("file").get<std::string>());
        if (!in) throw io_error("cannot open dossier " + f.at("file").get<std::string>());
        out.push_back(dossier_from_json(json::parse(in)));
    }
    return out;
}

}  // namespace netdissect
