#include "pnr/text.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

namespace pnr {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

}  // namespace

std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::string_view text) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && is_space(text[begin])) ++begin;
    while (end > begin && is_space(text[end - 1])) --end;
    return std::string(text.substr(begin, end - begin));
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    for (char& c : out) c = lower(c);
    return out;
}

std::size_t whitespace_word_count(std::string_view text) noexcept {
    std::size_t count = 0;
    bool in_word = false;
    for (char c : text) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> terms;
    std::string current;
    for (char c : text) {
        if (is_alnum(c)) {
            current.push_back(lower(c));
        } else if (!current.empty()) {
            terms.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) terms.push_back(std::move(current));
    return terms;
}

std::string normalize_for_match(std::string_view text) {
    std::string out = " ";
    for (char c : text) {
        if (is_alnum(c)) {
            out.push_back(lower(c));
        } else if (out.back() != ' ') {
            out.push_back(' ');
        }
    }
    if (out.back() != ' ') out.push_back(' ');
    return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> sentences;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || is_space(text[i + 1]))) {
            auto s = trim(text.substr(start, i + 1 - start));
            if (!s.empty()) sentences.push_back(std::move(s));
            start = i + 1;
        }
    }
    if (start < text.size()) {
        auto s = trim(text.substr(start));
        if (!s.empty()) sentences.push_back(std::move(s));
    }
    return sentences;
}

std::vector<std::string> split_list_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string line = trim(text.substr(start, end - start));
        std::size_t skip = 0;
        if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
            skip = 1;
        } else {
            while (skip < line.size() && std::isdigit(static_cast<unsigned char>(line[skip]))) ++skip;
            if (skip > 0 && skip < line.size() && (line[skip] == '.' || line[skip] == ')')) {
                ++skip;
            } else {
                skip = 0;
            }
        }
        line = trim(std::string_view(line).substr(skip));
        if (!line.empty()) lines.push_back(std::move(line));
        start = end + 1;
    }
    return lines;
}

double round_micro(double value) noexcept { return std::round(value * 1e6) / 1e6; }

}  // namespace pnr
