#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pnr {

/// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Lower-case hex rendering of fnv1a64, 16 characters.
std::string hash_hex(std::string_view text);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);

/// Number of maximal runs of non-whitespace characters.
std::size_t whitespace_word_count(std::string_view text) noexcept;

/// Retrieval tokenizer: lower-cased ASCII alphanumeric runs. Every other byte
/// separates terms.
std::vector<std::string> tokenize(std::string_view text);

/// Lower-cases and collapses every non-alphanumeric run to a single space,
/// with one leading and one trailing space so that substring tests respect
/// word boundaries.
std::string normalize_for_match(std::string_view text);

/// Sentence split on '.', '!' or '?' followed by whitespace or end of text.
/// Fragments are trimmed; empty fragments are dropped.
std::vector<std::string> split_sentences(std::string_view text);

/// Non-empty trimmed lines with any leading list marker ("-", "*", "1.")
/// removed.
std::vector<std::string> split_list_lines(std::string_view text);

/// Rounds to six decimals. Used wherever temperatures are derived by
/// arithmetic so that 0.7 + 2 * 0.1 prints and compares as 0.9.
double round_micro(double value) noexcept;

}  // namespace pnr
