#include "netdissect/summarize_calibrate.hpp"

#include "netdissect/error.hpp"
#include "netdissect/text.hpp"

#include <array>
#include <regex>

namespace netdissect {

namespace {

constexpr std::array<std::string_view, 6> kBoilerplatePrefixes = {"Sure",      "Here is", "Here are",
                                                                  "Certainly", "As an AI", "I hope"};

// "1. " / "2) " at line start or after whitespace.
const std::regex& item_marker() {
    static const std::regex re(R"((^|\s)(\d{1,2})[.)]\s+)");
    return re;
}

struct Marker {
    std::size_t begin;  // position of the digit
    std::size_t body;   // first character of the item text
    int number;
};

/// Numbered-list markers forming the sequence 1, 2, 3, ...
std::vector<Marker> numbered_markers(const std::string& s) {
    std::vector<Marker> out;
    int expect = 1;
    for (std::sregex_iterator it(s.begin(), s.end(), item_marker()), end; it != end; ++it) {
        const auto& m = *it;
        const int num = std::stoi(m[2].str());
        if (num != expect) continue;
        out.push_back({static_cast<std::size_t>(m.position(2)), static_cast<std::size_t>(m.position(0) + m.length(0)), num});
        ++expect;
    }
    return out;
}

std::string strip_markdown_prefix(std::string_view line) {
    std::string l = text::trim(line);
    while (!l.empty() && (l.front() == '*' || l.front() == '#' || l.front() == '_')) l.erase(l.begin());
    return text::trim(l);
}

bool is_boilerplate(std::string_view line) {
    const auto l = strip_markdown_prefix(line);
    for (auto p : kBoilerplatePrefixes)
        if (text::starts_with_ci(l, p)) return true;
    return false;
}

bool starts_numbered(std::string_view line) {
    static const std::regex re(R"(^\s*\d{1,2}[.)]\s+)");
    return std::regex_search(line.begin(), line.end(), re);
}

std::string clean_point(std::string s) {
    s = text::trim(s);
    // Unwrap "**Loud sound**: ..." emphasis.
    s.erase(std::remove(s.begin(), s.end(), '*'), s.end());
    return text::trim(s);
}

}  // namespace

std::string strip_boilerplate(const std::string& input) {
    std::vector<std::string> kept;
    for (const auto& line : text::split_lines(input)) {
        if (starts_numbered(line) || !is_boilerplate(line)) {
            kept.push_back(line);
            continue;
        }
        const auto markers = numbered_markers(line);
        if (!markers.empty()) kept.push_back(line.substr(markers.front().begin));
    }
    // Drop blank lines the removal left at either end.
    while (!kept.empty() && text::trim(kept.front()).empty()) kept.erase(kept.begin());
    while (!kept.empty() && text::trim(kept.back()).empty()) kept.pop_back();
    return text::join(kept, "\n");
}

std::vector<std::string> parse_points(const std::string& completion) {
    const std::string body = strip_boilerplate(completion);
    std::vector<std::string> points;

    const auto markers = numbered_markers(body);
    if (!markers.empty()) {
        for (std::size_t i = 0; i < markers.size(); ++i) {
            const std::size_t end = i + 1 < markers.size() ? markers[i + 1].begin : body.size();
            std::vector<std::string> lines;
            for (const auto& l : text::split_lines(body.substr(markers[i].body, end - markers[i].body)))
                if (auto t = text::trim(l); !t.empty()) lines.push_back(std::move(t));
            auto p = clean_point(text::join(lines, " "));
            if (!p.empty()) points.push_back(std::move(p));
        }
        return points;
    }

    bool bullets = false;
    for (const auto& line : text::split_lines(body)) {
        const auto l = text::trim(line);
        if (l.starts_with("- ") || l.starts_with("* ") || l.starts_with("\xE2\x80\xA2 ")) {
            bullets = true;
            break;
        }
    }
    if (bullets) {
        for (const auto& line : text::split_lines(body)) {
            auto l = text::trim(line);
            if (l.starts_with("- ") || l.starts_with("* ")) l = l.substr(2);
            else if (l.starts_with("\xE2\x80\xA2 ")) l = l.substr(4);
            else continue;
            auto p = clean_point(l);
            if (!p.empty()) points.push_back(std::move(p));
        }
        return points;
    }

    for (auto& s : text::split_sentences(body)) {
        auto p = clean_point(s);
        if (!p.empty()) points.push_back(std::move(p));
    }
    return points;
}

Summary summarize_descriptions(const std::vector<std::string>& descriptions, SummarySide side, LlmClient& client,
                               std::string neuron_id) {
    const auto completion = client.complete(summarize_prompt(descriptions));
    if (text::trim(completion).empty()) throw Error("parse", "empty summary completion for " + neuron_id);
    Summary s{parse_points(completion), side, std::move(neuron_id)};
    if (s.points.empty()) throw Error("parse", "summary completion for " + s.neuron_id + " has no content");
    return s;
}

CalibratedSummary calibrate(const Summary& high, const Summary& low, const TextEmbedder& sentence_embedder, double t) {
    if (!(t > 0.0 && t <= 1.0)) throw invalid_argument("calibration threshold must be in (0, 1], got " + std::to_string(t));
    const MatrixXd low_emb = sentence_embedder.embed_all(low.points);
    CalibratedSummary out;
    for (const auto& p : high.points) {
        const VectorXd e = sentence_embedder.embed(p);
        double best = -2.0;
        std::size_t best_idx = 0;
        for (Eigen::Index j = 0; j < low_emb.rows(); ++j) {
            const double c = cosine_similarity(e, low_emb.row(j).transpose());
            if (c > best) {
                best = c;
                best_idx = static_cast<std::size_t>(j);
            }
        }
        if (!low.points.empty() && best > t)
            out.removed.push_back({p, low.points[best_idx], best});
        else
            out.points.push_back(p);
    }
    return out;
}

}  // namespace netdissect
