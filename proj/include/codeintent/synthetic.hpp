#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "codeintent/corpus.hpp"
#include "codeintent/random.hpp"
#include "codeintent/text.hpp"

namespace codeintent {

// Desk-scale substitute for a real query log: emits raw entries by sampling
// intent-typed query templates with known ground truth, skewed popularity,
// randomized users/clicks, and a controlled dose of bot/locale/multi-language
// noise for the ingest filters to remove.
struct SyntheticConfig {
    Language language = Language::Java;
    std::size_t size = 5000;  // number of raw log entries
    std::uint64_t seed = 1;
    std::vector<std::string> banks;  // empty = all template banks
    double bot_rate = 0.02;
    double wrong_locale_rate = 0.02;
};

struct SyntheticQuery {
    std::string text;  // normalized
    int intent = 0;    // ground-truth code-search intent
};

struct SyntheticCorpus {
    std::vector<RawLogEntry> entries;
    std::vector<SyntheticQuery> truth;  // one row per distinct generated query
};

namespace detail {

// Queries are assembled from a content core plus independently attached
// trigger phrases. Independent attachment keeps the learning functions
// conditionally independent given the true intent (the label model's own
// assumption) and organically produces tie rows, conflicting rows and rows
// no function fires on.
struct TemplateBank {
    std::string name;
    int intent;
    double weight;
};

inline const std::vector<TemplateBank>& synthetic_banks() {
    static const std::vector<TemplateBank> banks = {
        {"code_search", 1, 0.52},
        {"not_code", 0, 0.44},
        // removed later by the multi-language filter
        {"multi_language", 0, 0.04},
    };
    return banks;
}

inline const std::vector<std::string>& synthetic_nouns() {
    static const std::vector<std::string> nouns = {
        "array",      "string",   "list",      "file",      "json",
        "xml",        "http",     "request",   "response",  "thread",
        "loop",       "class",    "object",    "interface", "dictionary",
        "map",        "queue",    "stack",     "datetime",  "regex",
        "socket",     "database", "table",     "button",    "form",
        "event",      "session",  "cookie",    "stream",    "buffer",
        "byte",       "integer",  "decimal",   "enum",      "struct",
        "generic",    "lambda",   "delegate",  "property",  "collection",
        "iterator",   "parser",   "logger",    "timer",     "cache",
        "token",      "hash",     "tree",      "graph",     "matrix"};
    return nouns;
}

inline const std::vector<std::string>& synthetic_verbs() {
    static const std::vector<std::string> verbs = {
        "sort",      "parse",     "read",      "write",    "convert",
        "merge",     "split",     "format",    "filter",   "validate",
        "encode",    "decode",    "serialize", "reverse",  "compare",
        "copy",      "remove",    "insert",    "append",   "iterate",
        "initialize", "resize",   "trim",      "join",     "search",
        "replace",   "compress",  "deserialize"};
    return verbs;
}

inline std::string pick(const std::vector<std::string>& pool, Rng& rng) {
    return pool[rng.index(pool.size())];
}

inline std::string error_code_token(Language lang, Rng& rng) {
    if (lang == Language::CSharp) {
        return "cs" + std::to_string(7000 + rng.index(1000));
    }
    return "java." + std::string(rng.bernoulli(0.5) ? "io" : "lang") + "." +
           pick(synthetic_nouns(), rng) + "exception";
}

inline std::string build_code_search_query(Language lang, Rng& rng) {
    const std::string lang_word = lang == Language::CSharp ? "c#" : "java";
    const bool howto = rng.bernoulli(0.45);
    const bool api = rng.bernoulli(0.40);
    const bool code = rng.bernoulli(0.55);
    // wrong-polarity noise is deliberately one-sided: a lone 0-vote next to a
    // lone 1-vote is then usually a mislabeled code query, which a fitted
    // label model can learn while majority vote can only flip a coin
    const bool debug_noise = rng.bernoulli(0.15);
    const bool learn_noise = rng.bernoulli(0.08);
    const bool lang_first = rng.bernoulli(0.5);
    std::string q;
    auto add = [&q](const std::string& w) {
        if (!q.empty()) q += ' ';
        q += w;
    };
    if (lang_first) add(lang_word);
    if (howto) add("how to");
    add(pick(synthetic_verbs(), rng));
    add(pick(synthetic_nouns(), rng));
    if (rng.bernoulli(0.3)) add(pick(synthetic_nouns(), rng));
    if (!lang_first) add("in " + lang_word);
    if (api) add(pick({"api", "method", "function"}, rng));
    if (debug_noise) add(pick({"error", "exception"}, rng));
    if (code) {
        add(pick({"example", "sample", "snippet", "sample code", "implementation"},
                 rng));
    }
    if (learn_noise) add("tutorial");
    return q;
}

inline std::string build_not_code_query(Language lang, Rng& rng) {
    const std::string lang_word = lang == Language::CSharp ? "c#" : "java";
    const bool debug = rng.bernoulli(0.50);
    const bool learn = rng.bernoulli(0.45);
    const bool install = rng.bernoulli(0.20);
    const bool nonprog = rng.bernoulli(0.12);
    const bool errcode = rng.bernoulli(0.15);
    const bool api_noise = rng.bernoulli(0.04);
    const bool code_noise = rng.bernoulli(0.03);
    const bool howto_noise = rng.bernoulli(0.03);
    std::string q;
    auto add = [&q](const std::string& w) {
        if (!q.empty()) q += ' ';
        q += w;
    };
    if (install) add(pick({"install", "download", "update"}, rng));
    const bool learn_prefix = learn && rng.bernoulli(0.5);
    if (learn_prefix) add(pick({"what is", "why"}, rng));
    if (howto_noise) add("how to");
    add(lang_word);
    add(pick(synthetic_nouns(), rng));
    if (rng.bernoulli(0.5)) add(pick(synthetic_verbs(), rng));
    if (api_noise) add(pick({"api", "method"}, rng));
    if (debug) add(pick({"error", "exception", "not working"}, rng));
    if (learn && !learn_prefix) {
        add(pick({"tutorial", "vs " + pick(synthetic_nouns(), rng), "difference"},
                 rng));
    }
    if (nonprog) add(pick({"interview questions", "jobs"}, rng));
    if (errcode) add(error_code_token(lang, rng));
    if (code_noise) add(pick({"example", "sample"}, rng));
    return q;
}

inline std::string build_multi_language_query(Language lang, Rng& rng) {
    const std::string lang_word = lang == Language::CSharp ? "c#" : "java";
    const std::string other = pick({"python", "c++", "javascript", "php"}, rng);
    if (rng.bernoulli(0.5)) {
        return lang_word + " vs " + other + " " + pick(synthetic_nouns(), rng);
    }
    return "convert " + pick(synthetic_nouns(), rng) + " from " + other + " to " +
           lang_word;
}

inline std::string build_query(const TemplateBank& bank, Language lang, Rng& rng) {
    if (bank.name == "code_search") return build_code_search_query(lang, rng);
    if (bank.name == "not_code") return build_not_code_query(lang, rng);
    return build_multi_language_query(lang, rng);
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config) {
    if (config.size < 1) {
        throw std::invalid_argument("synthetic corpus size must be >= 1");
    }
    std::vector<detail::TemplateBank> banks;
    if (config.banks.empty()) {
        banks = detail::synthetic_banks();
    } else {
        for (const auto& want : config.banks) {
            bool found = false;
            for (const auto& bank : detail::synthetic_banks()) {
                if (bank.name == want) {
                    banks.push_back(bank);
                    found = true;
                }
            }
            if (!found) {
                throw std::invalid_argument("unknown synthetic template bank: " + want);
            }
        }
    }
    Rng rng(config.seed);
    SyntheticCorpus result;

    std::vector<double> bank_cdf;
    double bank_acc = 0.0;
    for (const auto& bank : banks) {
        bank_acc += bank.weight;
        bank_cdf.push_back(bank_acc);
    }

    // distinct query pool with ground truth
    const std::size_t pool_target = std::max<std::size_t>(20, config.size / 4);
    std::set<std::string> seen;
    struct PoolEntry {
        SyntheticQuery query;
        std::vector<std::string> urls;
    };
    std::vector<PoolEntry> pool;
    for (std::size_t slot = 0; slot < pool_target; ++slot) {
        const auto& bank = banks[rng.categorical(bank_cdf)];
        std::string text;
        bool fresh = false;
        for (int attempt = 0; attempt < 100 && !fresh; ++attempt) {
            std::string candidate =
                normalize_query(detail::build_query(bank, config.language, rng));
            if (seen.insert(candidate).second) {
                text = candidate;
                fresh = true;
            }
        }
        if (!fresh) continue;
        PoolEntry entry;
        entry.query = {text, bank.intent};
        const std::size_t url_count = 1 + rng.index(3);
        const std::string lang_path = language_name(config.language);
        for (std::size_t u = 0; u < url_count; ++u) {
            switch (rng.index(4)) {
                case 0:
                    entry.urls.push_back("https://docs.example.com/" + lang_path + "/" +
                                         detail::pick(detail::synthetic_nouns(), rng));
                    break;
                case 1:
                    entry.urls.push_back("https://forum.example.org/questions/" +
                                         std::to_string(10000 + rng.index(90000)));
                    break;
                case 2:
                    entry.urls.push_back("https://tutorials.example.net/" +
                                         detail::pick(detail::synthetic_verbs(), rng) +
                                         "-" + lang_path);
                    break;
                default:
                    // a comma inside the URL exercises the export escaping
                    entry.urls.push_back("https://snippets.example.io/" + lang_path +
                                         "/v1,latest");
                    break;
            }
        }
        result.truth.push_back(entry.query);
        pool.push_back(std::move(entry));
    }

    // popularity-skewed draw weights over the pool
    std::vector<double> cdf;
    double acc = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        acc += 1.0 / std::pow(static_cast<double>(i + 2), 0.7);
        cdf.push_back(acc);
    }

    const std::size_t user_universe = std::max<std::size_t>(50, config.size / 6);
    for (std::size_t e = 0; e < config.size; ++e) {
        const PoolEntry& q = pool[rng.categorical(cdf)];
        RawLogEntry entry;
        entry.query = q.query.text;
        // raw-text jitter that normalization undoes
        if (rng.bernoulli(0.15)) {
            for (auto& c : entry.query) {
                c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            }
        }
        if (rng.bernoulli(0.1)) entry.query = "  " + entry.query + " ";
        char user[16];
        std::snprintf(user, sizeof(user), "u%06zu", rng.index(user_universe));
        entry.user_id = user;
        entry.is_bot = rng.bernoulli(config.bot_rate);
        if (rng.bernoulli(config.wrong_locale_rate)) {
            entry.locale = "fr-FR";
            entry.region = "FR";
        } else {
            entry.locale = "en-US";
            entry.region = "US";
        }
        for (std::size_t u = 0; u < q.urls.size(); ++u) {
            double p = u == 0 ? 0.6 : (u == 1 ? 0.3 : 0.15);
            if (rng.bernoulli(p)) entry.clicked_urls.push_back(q.urls[u]);
        }
        const std::size_t day = e / 86400;
        const std::size_t sec = e % 86400;
        char ts[32];
        std::snprintf(ts, sizeof(ts), "2019-09-%02zuT%02zu:%02zu:%02zuZ",
                      1 + day % 30, sec / 3600, (sec / 60) % 60, sec % 60);
        entry.timestamp = ts;
        result.entries.push_back(std::move(entry));
    }
    return result;
}

// Ground-truth file: tab-separated id, normalized query, intent label.
inline void write_truth_file(const std::string& path,
                             const std::vector<SyntheticQuery>& truth) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write truth file: " + path);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        out << (i + 1) << '\t' << truth[i].text << '\t' << truth[i].intent << '\n';
    }
}

}  // namespace codeintent
