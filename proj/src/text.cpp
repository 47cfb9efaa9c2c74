#include "netdissect/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace netdissect::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || (static_cast<unsigned char>(c) >= 0x80); }

constexpr std::array<std::string_view, 16> kAbbreviations = {
    "e.g", "i.e", "etc", "vs", "mr", "mrs", "ms", "dr", "prof", "st", "approx", "no", "fig", "cf", "ca", "jr"};

bool ends_with_abbreviation(std::string_view before_dot) {
    // Last whitespace-delimited token before the period.
    const auto pos = before_dot.find_last_of(" \t\n(\"'");
    std::string tok = to_lower(pos == std::string_view::npos ? before_dot : before_dot.substr(pos + 1));
    if (tok.empty()) return false;
    if (tok.size() == 1 && std::isalpha(static_cast<unsigned char>(tok[0]))) return true;  // initial
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), tok) != kAbbreviations.end();
}

}  // namespace

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    return true;
}

std::vector<std::string> split_sentences(std::string_view prose) {
    std::vector<std::string> out;
    std::size_t start = 0;
    const std::size_t n = prose.size();
    for (std::size_t i = 0; i < n; ++i) {
        const char c = prose[i];
        if (c != '.' && c != '!' && c != '?') continue;
        // Swallow runs like "?!" or "..." and closing quotes/brackets.
        std::size_t j = i + 1;
        while (j < n && (prose[j] == '.' || prose[j] == '!' || prose[j] == '?')) ++j;
        while (j < n && (prose[j] == '"' || prose[j] == '\'' || prose[j] == ')')) ++j;
        if (j < n && !is_space(prose[j])) continue;  // "3.5", "e.g.x"
        if (c == '.' && j == i + 1 && ends_with_abbreviation(prose.substr(start, i - start))) continue;
        auto s = trim(prose.substr(start, j - start));
        if (!s.empty()) out.push_back(std::move(s));
        start = j;
        i = j - 1;
    }
    auto tail = trim(prose.substr(std::min(start, n)));
    if (!tail.empty()) out.push_back(std::move(tail));
    return out;
}

std::vector<std::string> word_tokens_preserve_case(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    const std::size_t n = s.size();
    for (std::size_t i = 0; i < n; ++i) {
        const char c = s[i];
        if (is_word_char(c)) {
            cur.push_back(c);
        } else if ((c == '-' || c == '\'') && !cur.empty() && i + 1 < n && is_word_char(s[i + 1])) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<std::string> word_tokens(std::string_view s) {
    auto toks = word_tokens_preserve_case(s);
    for (auto& t : toks) t = to_lower(t);
    return toks;
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '\n') {
            auto line = s.substr(start, i - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            out.emplace_back(line);
            start = i + 1;
        }
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string sanitize_filename(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')
            out.push_back(c);
        else if (c == '#')
            out += "__";
        else
            out.push_back('_');
    }
    return out;
}

}  // namespace netdissect::text
