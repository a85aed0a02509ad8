#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "codeintent/random.hpp"
#include "codeintent/text.hpp"

namespace codeintent {

enum class Language { CSharp, Java };

inline std::string language_name(Language lang) {
    return lang == Language::CSharp ? "csharp" : "java";
}

inline Language parse_language(const std::string& name) {
    std::string n = normalize_query(name);
    if (n == "csharp" || n == "c#") return Language::CSharp;
    if (n == "java") return Language::Java;
    throw std::invalid_argument("unknown language: " + name +
                                " (expected csharp or java)");
}

// One pre-filter query-log line.
struct RawLogEntry {
    std::string query;
    std::string user_id;
    std::string locale;   // BCP-47 style, e.g. "en-US"
    std::string region;   // country code, e.g. "US"
    bool is_bot = false;
    std::vector<std::string> clicked_urls;  // one element per click, repeats allowed
    std::string timestamp;                  // ISO-8601 instant
};

// Aggregated, normalized query.
struct QueryRecord {
    long long id = 0;
    std::string text;  // lowercase, single-space separated
    long long frequency = 0;
    long long distinct_users = 0;
    std::vector<std::string> top_clicked_urls;  // <= 3, by click count desc
    Language language = Language::CSharp;
    long long popularity_rank = 0;  // 0 = not assigned yet
};

struct Corpus {
    std::vector<QueryRecord> records;
    Language language = Language::CSharp;
};

// Keyword patterns identifying one programming language. The two target
// languages (csharp, java) always carry a set; additional sets act as an
// exclusion vocabulary for multi-language query removal.
struct LanguageKeywordSet {
    std::string name;                   // "csharp", "java", "cpp", ...
    std::vector<std::string> patterns;  // stored lowercase, nonempty
};

inline std::vector<LanguageKeywordSet> default_keyword_sets() {
    return {
        {"csharp", {"c#", "c sharp", "csharp"}},
        {"java", {"java"}},
        {"cpp", {"c++", "cpp"}},
        {"python", {"python"}},
        {"javascript", {"javascript", "nodejs", "node.js"}},
        {"php", {"php"}},
        {"ruby", {"ruby"}},
        {"typescript", {"typescript"}},
        {"kotlin", {"kotlin"}},
        {"scala", {"scala"}},
        {"perl", {"perl"}},
        {"matlab", {"matlab"}},
        {"golang", {"golang"}},
    };
}

// {"targets": {"java": ["java"], ...}, "exclusions": {"cpp": ["c++"], ...}}
inline std::vector<LanguageKeywordSet> parse_keyword_sets(const nlohmann::json& j) {
    std::vector<LanguageKeywordSet> sets;
    auto read_group = [&sets](const nlohmann::json& group) {
        for (auto it = group.begin(); it != group.end(); ++it) {
            LanguageKeywordSet set;
            set.name = normalize_query(it.key());
            for (const auto& p : it.value()) {
                std::string pat = normalize_query(p.get<std::string>());
                if (!pat.empty()) set.patterns.push_back(pat);
            }
            if (set.patterns.empty()) {
                throw std::invalid_argument("keyword set '" + set.name +
                                            "' has no patterns");
            }
            sets.push_back(std::move(set));
        }
    };
    if (j.contains("targets")) read_group(j.at("targets"));
    if (j.contains("exclusions")) read_group(j.at("exclusions"));
    if (sets.empty()) throw std::invalid_argument("keyword config defines no sets");
    return sets;
}

inline std::vector<LanguageKeywordSet> load_keyword_sets(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open keyword config: " + path);
    return parse_keyword_sets(nlohmann::json::parse(in));
}

struct IngestConfig {
    std::string locale = "en-US";
    std::string region = "US";
    Language language = Language::CSharp;
};

struct IngestStats {
    std::size_t malformed = 0;  // invalid entries, skipped
    std::size_t bots = 0;
    std::size_t locale_mismatch = 0;
    std::size_t accepted = 0;
};

struct IngestResult {
    Corpus corpus;
    IngestStats stats;
};

namespace detail {

inline bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (to_lower_ascii(a[i]) != to_lower_ascii(b[i])) return false;
    }
    return true;
}

}  // namespace detail

// Drops bot/foreign traffic, normalizes query text, and aggregates equal
// queries into QueryRecords. Grouping goes through an ordered map keyed by
// normalized text, so the result is independent of the input stream order;
// ids are 1..N in lexicographic text order.
inline IngestResult ingest(const std::vector<RawLogEntry>& entries,
                           const IngestConfig& config) {
    struct Group {
        long long frequency = 0;
        std::set<std::string> users;
        std::map<std::string, long long> url_clicks;
    };
    IngestResult result;
    result.corpus.language = config.language;
    std::map<std::string, Group> groups;
    for (const auto& entry : entries) {
        std::string text = normalize_query(entry.query);
        if (text.empty() || entry.user_id.empty()) {
            ++result.stats.malformed;
            continue;
        }
        if (entry.is_bot) {
            ++result.stats.bots;
            continue;
        }
        if (!detail::iequals(entry.locale, config.locale) ||
            !detail::iequals(entry.region, config.region)) {
            ++result.stats.locale_mismatch;
            continue;
        }
        Group& g = groups[text];
        ++g.frequency;
        g.users.insert(entry.user_id);
        for (const auto& url : entry.clicked_urls) ++g.url_clicks[url];
        ++result.stats.accepted;
    }
    long long next_id = 1;
    for (const auto& [text, g] : groups) {
        QueryRecord rec;
        rec.id = next_id++;
        rec.text = text;
        rec.frequency = g.frequency;
        rec.distinct_users = static_cast<long long>(g.users.size());
        rec.language = config.language;
        // top 3 URLs by click count, ties broken lexicographically
        std::vector<std::pair<std::string, long long>> urls(g.url_clicks.begin(),
                                                            g.url_clicks.end());
        std::sort(urls.begin(), urls.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (std::size_t i = 0; i < urls.size() && i < 3; ++i) {
            rec.top_clicked_urls.push_back(urls[i].first);
        }
        result.corpus.records.push_back(std::move(rec));
    }
    return result;
}

// Retains records that match at least one pattern of the target language's
// set and no pattern of any other configured set (multi-language queries and
// queries about other languages are removed).
inline Corpus filter_language(const Corpus& corpus,
                              const std::vector<LanguageKeywordSet>& sets,
                              Language target) {
    const std::string target_name = language_name(target);
    const LanguageKeywordSet* target_set = nullptr;
    for (const auto& set : sets) {
        if (set.name == target_name) target_set = &set;
    }
    if (!target_set) {
        throw std::invalid_argument("no keyword set configured for language: " +
                                    target_name);
    }
    Corpus out;
    out.language = target;
    for (const auto& rec : corpus.records) {
        bool matches_target = false;
        for (const auto& p : target_set->patterns) {
            if (contains_pattern(rec.text, p)) {
                matches_target = true;
                break;
            }
        }
        if (!matches_target) continue;
        bool matches_other = false;
        for (const auto& set : sets) {
            if (set.name == target_name) continue;
            for (const auto& p : set.patterns) {
                if (contains_pattern(rec.text, p)) {
                    matches_other = true;
                    break;
                }
            }
            if (matches_other) break;
        }
        if (!matches_other) out.records.push_back(rec);
    }
    return out;
}

// Removes queries entered by fewer than k distinct users.
inline Corpus apply_k_anonymity(const Corpus& corpus, long long k) {
    if (k < 1) {
        throw std::invalid_argument("k-anonymity threshold must be >= 1, got " +
                                    std::to_string(k));
    }
    Corpus out;
    out.language = corpus.language;
    for (const auto& rec : corpus.records) {
        if (rec.distinct_users >= k) out.records.push_back(rec);
    }
    return out;
}

// Ranks 1..N by descending frequency; frequency ties broken by
// lexicographic query text. Record order is preserved.
inline Corpus assign_popularity_ranks(Corpus corpus) {
    std::vector<std::size_t> order(corpus.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&corpus](std::size_t a, std::size_t b) {
        const auto& ra = corpus.records[a];
        const auto& rb = corpus.records[b];
        if (ra.frequency != rb.frequency) return ra.frequency > rb.frequency;
        return ra.text < rb.text;
    });
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        corpus.records[order[rank]].popularity_rank = static_cast<long long>(rank + 1);
    }
    return corpus;
}

// Length-stratified uniform sample. Strata are token counts (tokenization on
// non-alphanumerics); quotas are distributed one at a time round-robin from
// the shortest stratum upward, so sizes end up as equal as capacities allow.
// Deterministic for a fixed (corpus, size, seed).
inline std::vector<QueryRecord> sample_by_length(const Corpus& corpus,
                                                 std::size_t size,
                                                 std::uint64_t seed) {
    if (size > corpus.records.size()) {
        throw std::invalid_argument("sample size " + std::to_string(size) +
                                    " exceeds corpus size " +
                                    std::to_string(corpus.records.size()));
    }
    std::map<std::size_t, std::vector<const QueryRecord*>> strata;
    for (const auto& rec : corpus.records) {
        strata[tokenize(rec.text).size()].push_back(&rec);
    }
    Rng rng(seed);
    std::vector<std::vector<const QueryRecord*>> pools;
    for (auto& [len, pool] : strata) {
        rng.shuffle(pool);
        pools.push_back(std::move(pool));
    }
    std::vector<std::size_t> quota(pools.size(), 0);
    std::size_t remaining = size;
    while (remaining > 0) {
        for (std::size_t i = 0; i < pools.size() && remaining > 0; ++i) {
            if (quota[i] < pools[i].size()) {
                ++quota[i];
                --remaining;
            }
        }
    }
    std::vector<QueryRecord> sample;
    sample.reserve(size);
    for (std::size_t i = 0; i < pools.size(); ++i) {
        for (std::size_t j = 0; j < quota[i]; ++j) sample.push_back(*pools[i][j]);
    }
    return sample;
}

// --- log file and corpus serialization -------------------------------------

struct LogParseResult {
    std::vector<RawLogEntry> entries;
    std::size_t malformed = 0;
};

inline nlohmann::ordered_json log_entry_to_json(const RawLogEntry& e) {
    nlohmann::ordered_json j;
    j["query"] = e.query;
    j["user_id"] = e.user_id;
    j["locale"] = e.locale;
    j["region"] = e.region;
    j["is_bot"] = e.is_bot;
    j["clicked_urls"] = e.clicked_urls;
    j["timestamp"] = e.timestamp;
    return j;
}

// Line-delimited JSON, one RawLogEntry per line. Structurally broken lines
// are counted, not fatal.
inline LogParseResult parse_log_lines(std::istream& in) {
    LogParseResult result;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            ++result.malformed;
            continue;
        }
        RawLogEntry e;
        try {
            e.query = j.at("query").get<std::string>();
            e.user_id = j.at("user_id").get<std::string>();
            e.locale = j.at("locale").get<std::string>();
            e.region = j.at("region").get<std::string>();
            e.is_bot = j.at("is_bot").get<bool>();
            e.timestamp = j.at("timestamp").get<std::string>();
            if (j.contains("clicked_urls")) {
                e.clicked_urls = j.at("clicked_urls").get<std::vector<std::string>>();
            }
        } catch (const nlohmann::json::exception&) {
            ++result.malformed;
            continue;
        }
        result.entries.push_back(std::move(e));
    }
    return result;
}

inline LogParseResult parse_log_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open log file: " + path);
    return parse_log_lines(in);
}

inline void write_log_file(const std::string& path,
                           const std::vector<RawLogEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write log file: " + path);
    for (const auto& e : entries) out << log_entry_to_json(e).dump() << '\n';
}

inline void save_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    for (const auto& rec : corpus.records) {
        nlohmann::ordered_json j;
        j["id"] = rec.id;
        j["text"] = rec.text;
        j["frequency"] = rec.frequency;
        j["distinct_users"] = rec.distinct_users;
        j["top_clicked_urls"] = rec.top_clicked_urls;
        j["language"] = language_name(rec.language);
        j["popularity_rank"] = rec.popularity_rank;
        out << j.dump() << '\n';
    }
}

inline Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    Corpus corpus;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        QueryRecord rec;
        rec.id = j.at("id").get<long long>();
        rec.text = j.at("text").get<std::string>();
        rec.frequency = j.at("frequency").get<long long>();
        rec.distinct_users = j.at("distinct_users").get<long long>();
        rec.top_clicked_urls = j.at("top_clicked_urls").get<std::vector<std::string>>();
        rec.language = parse_language(j.at("language").get<std::string>());
        rec.popularity_rank = j.at("popularity_rank").get<long long>();
        if (first) {
            corpus.language = rec.language;
            first = false;
        }
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

}  // namespace codeintent
