#pragma once

#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace codeintent {

// Token lists produced by tokenize(); every element is a maximal run of
// alphanumeric characters, lowercased.
using TokenizedQuery = std::vector<std::string>;

inline bool is_alnum_ascii(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

inline char to_lower_ascii(char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

// Lowercases, trims, and collapses internal whitespace runs to one space.
// Idempotent; empty input yields empty output.
inline std::string normalize_query(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (char c : raw) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(to_lower_ascii(c));
    }
    return out;
}

// Splits on every non-alphanumeric character, drops empty segments,
// lowercases.
inline TokenizedQuery tokenize(std::string_view text) {
    TokenizedQuery tokens;
    std::string cur;
    for (char c : text) {
        if (is_alnum_ascii(c)) {
            cur.push_back(to_lower_ascii(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// Order-preserving removal of exact stopword matches.
inline TokenizedQuery remove_stopwords(const TokenizedQuery& tokens,
                                       const std::set<std::string>& stopwords) {
    TokenizedQuery kept;
    kept.reserve(tokens.size());
    for (const auto& t : tokens) {
        if (!stopwords.count(t)) kept.push_back(t);
    }
    return kept;
}

// Boundary-aware phrase match: `pattern` must occur in `text` with
// non-alphanumeric neighbors (string start/end count as boundaries). The
// pattern itself may contain non-alphanumerics ("c#", ".msi", "not working"),
// so a plain word-boundary regex does not cover it.
inline bool contains_pattern(std::string_view text, std::string_view pattern) {
    if (pattern.empty() || pattern.size() > text.size()) return false;
    for (std::size_t pos = text.find(pattern); pos != std::string_view::npos;
         pos = text.find(pattern, pos + 1)) {
        bool left_ok = pos == 0 || !is_alnum_ascii(text[pos - 1]);
        std::size_t end = pos + pattern.size();
        bool right_ok = end == text.size() || !is_alnum_ascii(text[end]);
        if (left_ok && right_ok) return true;
    }
    return false;
}

// English function words removed before featurization. Shipped as
// data/stopwords.txt as well; a unit test keeps the two in sync.
inline const std::set<std::string>& default_stopwords() {
    static const std::set<std::string> words = {
        "a", "about", "above", "after", "again", "against", "all", "am", "an",
        "and", "any", "are", "as", "at", "be", "because", "been", "before",
        "being", "below", "between", "both", "but", "by", "can", "cannot",
        "could", "did", "do", "does", "doing", "down", "during", "each",
        "few", "for", "from", "further", "had", "has", "have", "having", "he",
        "her", "here", "hers", "herself", "him", "himself", "his", "how", "i",
        "if", "in", "into", "is", "it", "its", "itself", "just", "me", "more",
        "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on",
        "once", "only", "or", "other", "our", "ours", "ourselves", "out",
        "over", "own", "same", "she", "should", "so", "some", "such", "than",
        "that", "the", "their", "theirs", "them", "themselves", "then",
        "there", "these", "they", "this", "those", "through", "to", "too",
        "under", "until", "up", "very", "was", "we", "were", "what", "when",
        "where", "which", "while", "who", "whom", "why", "will", "with",
        "you", "your", "yours", "yourself", "yourselves"};
    return words;
}

// One stopword per line; blank lines and '#' comments ignored.
inline std::set<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stopword file: " + path);
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        std::string w = normalize_query(line);
        if (w.empty() || w[0] == '#') continue;
        words.insert(w);
    }
    return words;
}

}  // namespace codeintent
