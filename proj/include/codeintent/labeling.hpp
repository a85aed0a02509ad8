#pragma once

#include <fstream>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "codeintent/corpus.hpp"
#include "codeintent/text.hpp"

namespace codeintent {

// Learning-function output: 1 = code-search intent, 0 = not, -1 = abstain.
inline constexpr int kAbstain = -1;

// Declarative learning-function definition: a set of boundary-matched
// phrases and/or regexes, and the single class label emitted on a hit.
struct LearningFunctionSpec {
    std::string name;
    int emit_label = 0;  // 0 or 1
    std::vector<std::string> keywords;
    std::vector<std::string> regexes;
};

// A compiled learning function. Applying it to a normalized query yields
// emit_label when any keyword or regex matches, and abstain (-1) otherwise.
class CompiledLf {
public:
    explicit CompiledLf(LearningFunctionSpec spec) : spec_(std::move(spec)) {
        if (spec_.emit_label != 0 && spec_.emit_label != 1) {
            throw std::invalid_argument("learning function '" + spec_.name +
                                        "': emit_label must be 0 or 1");
        }
        if (spec_.keywords.empty() && spec_.regexes.empty()) {
            throw std::invalid_argument("learning function '" + spec_.name +
                                        "': needs at least one keyword or regex");
        }
        for (auto& kw : spec_.keywords) {
            kw = normalize_query(kw);
            if (kw.empty()) {
                throw std::invalid_argument("learning function '" + spec_.name +
                                            "': empty keyword");
            }
        }
        for (const auto& pattern : spec_.regexes) {
            try {
                compiled_.emplace_back(pattern, std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                throw std::invalid_argument("learning function '" + spec_.name +
                                            "': invalid regex '" + pattern +
                                            "': " + e.what());
            }
        }
    }

    const std::string& name() const { return spec_.name; }
    int emit_label() const { return spec_.emit_label; }
    const LearningFunctionSpec& spec() const { return spec_; }

    int apply(std::string_view normalized_query) const {
        for (const auto& kw : spec_.keywords) {
            if (contains_pattern(normalized_query, kw)) return spec_.emit_label;
        }
        for (const auto& re : compiled_) {
            if (std::regex_search(normalized_query.begin(), normalized_query.end(),
                                  re)) {
                return spec_.emit_label;
            }
        }
        return kAbstain;
    }

private:
    LearningFunctionSpec spec_;
    std::vector<std::regex> compiled_;
};

inline CompiledLf compile_lf(LearningFunctionSpec spec) {
    return CompiledLf(std::move(spec));
}

inline std::vector<CompiledLf> compile_lfs(
    const std::vector<LearningFunctionSpec>& specs) {
    std::vector<CompiledLf> lfs;
    lfs.reserve(specs.size());
    for (const auto& spec : specs) lfs.emplace_back(spec);
    return lfs;
}

inline int apply_lf(const CompiledLf& lf, std::string_view normalized_query) {
    return lf.apply(normalized_query);
}

// m x n matrix of learning-function outputs over {-1, 0, 1}.
struct LabelMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<int> values;  // row-major, rows*cols entries
    std::vector<std::string> lf_names;    // size cols
    std::vector<long long> query_ids;     // size rows

    int at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
    int& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

inline LabelMatrix build_label_matrix(const Corpus& corpus,
                                      const std::vector<CompiledLf>& lfs) {
    if (corpus.records.empty()) {
        throw std::invalid_argument("cannot build label matrix: empty corpus");
    }
    if (lfs.empty()) {
        throw std::invalid_argument(
            "cannot build label matrix: no learning functions");
    }
    LabelMatrix matrix;
    matrix.rows = corpus.records.size();
    matrix.cols = lfs.size();
    matrix.values.resize(matrix.rows * matrix.cols);
    for (const auto& lf : lfs) matrix.lf_names.push_back(lf.name());
    matrix.query_ids.reserve(matrix.rows);
    for (std::size_t i = 0; i < matrix.rows; ++i) {
        const auto& rec = corpus.records[i];
        matrix.query_ids.push_back(rec.id);
        for (std::size_t j = 0; j < matrix.cols; ++j) {
            matrix.at(i, j) = lfs[j].apply(rec.text);
        }
    }
    return matrix;
}

// Standard data-programming diagnostics over a label matrix.
struct LfDiagnostics {
    std::vector<double> coverage;               // per LF, fraction != -1
    std::vector<std::vector<double>> overlap;   // both != -1
    std::vector<std::vector<double>> conflict;  // both != -1 and different
};

inline LfDiagnostics lf_diagnostics(const LabelMatrix& matrix) {
    if (matrix.rows == 0) {
        throw std::invalid_argument("lf_diagnostics: empty matrix");
    }
    const std::size_t n = matrix.cols;
    LfDiagnostics d;
    d.coverage.assign(n, 0.0);
    d.overlap.assign(n, std::vector<double>(n, 0.0));
    d.conflict.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < matrix.rows; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            int vj = matrix.at(i, j);
            if (vj == kAbstain) continue;
            d.coverage[j] += 1.0;
            for (std::size_t k = 0; k < n; ++k) {
                int vk = matrix.at(i, k);
                if (vk == kAbstain) continue;
                d.overlap[j][k] += 1.0;
                if (vj != vk) d.conflict[j][k] += 1.0;
            }
        }
    }
    const double m = static_cast<double>(matrix.rows);
    for (std::size_t j = 0; j < n; ++j) {
        d.coverage[j] /= m;
        for (std::size_t k = 0; k < n; ++k) {
            d.overlap[j][k] /= m;
            d.conflict[j][k] /= m;
        }
    }
    return d;
}

// The built-in learning-function bank. Keyword lists are the minimal closed
// sets that reproduce every documented trigger query; users can extend them
// through an LF config file. Also shipped as data/default_lfs.json.
inline std::vector<LearningFunctionSpec> default_learning_functions() {
    return {
        {"api", 1, {"api", "function", "method", "call"}, {}},
        {"debug", 0, {"error", "exception", "fail", "not working", "debug"}, {}},
        {"howto", 1, {"how"}, {}},
        {"learn", 0, {"tutorial", "what", "why", "difference", "versus", "vs"}, {}},
        {"install", 0, {"install", "download", "update"}, {}},
        {"code_search", 1,
         {"example", "sample code", "sample", "snippet", "implementation"}, {}},
        {"non_programming", 0, {"interview", "interviews", "jobs", "job"}, {}},
        {"error_codes", 0, {},
         {"cs[0-9]{4}", "([a-z0-9_]+\\.)+[a-z0-9_]*exception"}},
    };
}

inline std::vector<LearningFunctionSpec> parse_learning_functions(
    const nlohmann::json& j) {
    std::vector<LearningFunctionSpec> specs;
    for (const auto& entry : j.at("learning_functions")) {
        LearningFunctionSpec spec;
        spec.name = entry.at("name").get<std::string>();
        spec.emit_label = entry.at("emit_label").get<int>();
        if (entry.contains("keywords")) {
            spec.keywords = entry.at("keywords").get<std::vector<std::string>>();
        }
        if (entry.contains("regexes")) {
            spec.regexes = entry.at("regexes").get<std::vector<std::string>>();
        }
        specs.push_back(std::move(spec));
    }
    if (specs.empty()) {
        throw std::invalid_argument("LF config defines no learning functions");
    }
    return specs;
}

inline std::vector<LearningFunctionSpec> load_learning_functions(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open LF config: " + path);
    return parse_learning_functions(nlohmann::json::parse(in));
}

inline nlohmann::ordered_json learning_functions_to_json(
    const std::vector<LearningFunctionSpec>& specs) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& spec : specs) {
        nlohmann::ordered_json j;
        j["name"] = spec.name;
        j["emit_label"] = spec.emit_label;
        j["keywords"] = spec.keywords;
        j["regexes"] = spec.regexes;
        arr.push_back(std::move(j));
    }
    nlohmann::ordered_json root;
    root["learning_functions"] = std::move(arr);
    return root;
}

inline void save_label_matrix(const std::string& path, const LabelMatrix& matrix) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["lf_names"] = matrix.lf_names;
    j["query_ids"] = matrix.query_ids;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < matrix.rows; ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t jx = 0; jx < matrix.cols; ++jx) row.push_back(matrix.at(i, jx));
        rows.push_back(std::move(row));
    }
    j["values"] = std::move(rows);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write label matrix: " + path);
    out << j.dump(2) << '\n';
}

inline LabelMatrix load_label_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open label matrix: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    LabelMatrix matrix;
    matrix.lf_names = j.at("lf_names").get<std::vector<std::string>>();
    matrix.query_ids = j.at("query_ids").get<std::vector<long long>>();
    matrix.rows = matrix.query_ids.size();
    matrix.cols = matrix.lf_names.size();
    matrix.values.reserve(matrix.rows * matrix.cols);
    for (const auto& row : j.at("values")) {
        for (const auto& v : row) {
            int value = v.get<int>();
            if (value < -1 || value > 1) {
                throw std::runtime_error("label matrix cell out of {-1,0,1}: " +
                                         std::to_string(value));
            }
            matrix.values.push_back(value);
        }
    }
    if (matrix.values.size() != matrix.rows * matrix.cols) {
        throw std::runtime_error("label matrix shape mismatch in " + path);
    }
    return matrix;
}

}  // namespace codeintent
