#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace netdissect::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Splits prose into sentences on terminal punctuation followed by
/// whitespace. Common abbreviations ("e.g.", "Mr.", single initials) and
/// decimal numbers do not end a sentence.
std::vector<std::string> split_sentences(std::string_view prose);

/// Lowercased word tokens. Hyphens and apostrophes inside a word are kept
/// ("high-pitched", "dog's"); all other punctuation separates tokens.
std::vector<std::string> word_tokens(std::string_view s);

/// Surface-preserving variant of word_tokens.
std::vector<std::string> word_tokens_preserve_case(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Filesystem-safe rendering of a neuron id.
std::string sanitize_filename(std::string_view s);

}  // namespace netdissect::text
