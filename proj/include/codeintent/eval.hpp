#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "codeintent/text.hpp"

namespace codeintent {

struct ConfusionCounts {
    long long tp = 0;  // class 1 = positive
    long long fp = 0;
    long long fn = 0;
    long long tn = 0;

    long long total() const { return tp + fp + fn + tn; }
};

inline ConfusionCounts confusion(const std::vector<int>& preds,
                                 const std::vector<int>& golds) {
    if (preds.size() != golds.size()) {
        throw std::invalid_argument("confusion: prediction/gold length mismatch");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] != 0 && preds[i] != 1) {
            throw std::invalid_argument("confusion: prediction not in {0,1}");
        }
        if (golds[i] != 0 && golds[i] != 1) {
            throw std::invalid_argument("confusion: gold label not in {0,1}");
        }
        if (preds[i] == 1) {
            golds[i] == 1 ? ++c.tp : ++c.fp;
        } else {
            golds[i] == 1 ? ++c.fn : ++c.tn;
        }
    }
    return c;
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct EvalReport {
    double accuracy = 0.0;
    ClassMetrics code_intent;      // class 1
    ClassMetrics not_code_intent;  // class 0
    long long n = 0;
    double prevalence = 0.0;  // fraction of gold labels equal to 1
    std::vector<std::string> flags;  // 0/0 ratios defined as 0 are noted here
};

namespace detail {

inline double safe_ratio(long long num, long long den, const char* what,
                         std::vector<std::string>& flags) {
    if (den == 0) {
        flags.push_back(std::string(what) + " is 0/0, defined as 0");
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

inline double harmonic_f1(double p, double r, const char* what,
                          std::vector<std::string>& flags) {
    if (p + r == 0.0) {
        flags.push_back(std::string(what) + " is 0/0, defined as 0");
        return 0.0;
    }
    return 2.0 * p * r / (p + r);
}

}  // namespace detail

// Accuracy plus per-class precision/recall/F1; class-0 metrics are the
// class-1 formulas with roles swapped. Any 0/0 ratio is defined as 0 and
// flagged.
inline EvalReport metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw std::invalid_argument("metrics: empty confusion counts");
    EvalReport r;
    r.n = c.total();
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    r.prevalence = static_cast<double>(c.tp + c.fn) / static_cast<double>(c.total());
    r.code_intent.precision =
        detail::safe_ratio(c.tp, c.tp + c.fp, "class-1 precision", r.flags);
    r.code_intent.recall =
        detail::safe_ratio(c.tp, c.tp + c.fn, "class-1 recall", r.flags);
    r.code_intent.f1 = detail::harmonic_f1(r.code_intent.precision,
                                           r.code_intent.recall, "class-1 f1", r.flags);
    r.not_code_intent.precision =
        detail::safe_ratio(c.tn, c.tn + c.fn, "class-0 precision", r.flags);
    r.not_code_intent.recall =
        detail::safe_ratio(c.tn, c.tn + c.fp, "class-0 recall", r.flags);
    r.not_code_intent.f1 =
        detail::harmonic_f1(r.not_code_intent.precision, r.not_code_intent.recall,
                            "class-0 f1", r.flags);
    return r;
}

// N items x C categories table of rating counts; every row sums to the
// (constant) number of raters.
struct RatingsTable {
    std::vector<std::vector<long long>> counts;
    int n_raters = 0;
};

// Fleiss' kappa: (Pbar - PbarE) / (1 - PbarE) with
//   P_i = [sum_j n_ij (n_ij - 1)] / [n (n-1)],  PbarE = sum_j p_j^2.
inline double fleiss_kappa(const RatingsTable& table) {
    const auto item_count = static_cast<long long>(table.counts.size());
    if (item_count == 0) throw std::invalid_argument("fleiss_kappa: no items");
    if (table.n_raters < 2) {
        throw std::invalid_argument("fleiss_kappa: need at least 2 raters");
    }
    const std::size_t categories = table.counts[0].size();
    const double n = table.n_raters;
    double p_bar = 0.0;
    std::vector<double> category_mass(categories, 0.0);
    for (const auto& row : table.counts) {
        if (row.size() != categories) {
            throw std::invalid_argument("fleiss_kappa: ragged ratings table");
        }
        long long row_sum = 0;
        double agree = 0.0;
        for (std::size_t j = 0; j < categories; ++j) {
            if (row[j] < 0) throw std::invalid_argument("fleiss_kappa: negative count");
            row_sum += row[j];
            agree += static_cast<double>(row[j]) * (row[j] - 1);
            category_mass[j] += static_cast<double>(row[j]);
        }
        if (row_sum != table.n_raters) {
            throw std::invalid_argument("fleiss_kappa: row sum != rater count");
        }
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= static_cast<double>(item_count);
    double p_e = 0.0;
    for (double mass : category_mass) {
        double p_j = mass / (n * static_cast<double>(item_count));
        p_e += p_j * p_j;
    }
    if (p_e >= 1.0) {
        throw std::runtime_error(
            "fleiss_kappa: expected agreement is 1 (all raters used one "
            "category), kappa is undefined");
    }
    return (p_bar - p_e) / (1.0 - p_e);
}

// Per-item label chosen by most annotators. An even annotator count is
// accepted only while no item ties.
inline int majority_gold(const std::vector<int>& annotator_labels) {
    if (annotator_labels.empty()) {
        throw std::invalid_argument("majority_gold: no annotator labels");
    }
    long long ones = 0;
    long long zeros = 0;
    for (int l : annotator_labels) {
        if (l == 1) ++ones;
        else if (l == 0) ++zeros;
        else throw std::invalid_argument("majority_gold: label not in {0,1}");
    }
    if (ones == zeros) {
        throw std::invalid_argument(
            "majority_gold: tied annotator vote (even annotator count)");
    }
    return ones > zeros ? 1 : 0;
}

// Composes confusion + metrics over (id, label) pairs; every id must appear
// on both sides.
inline EvalReport evaluate_model(
    const std::vector<std::pair<long long, int>>& predictions,
    const std::vector<std::pair<long long, int>>& golds) {
    if (golds.empty()) throw std::invalid_argument("evaluate_model: empty gold set");
    if (predictions.size() != golds.size()) {
        throw std::invalid_argument("evaluate_model: prediction/gold id mismatch");
    }
    std::map<long long, int> gold_by_id(golds.begin(), golds.end());
    std::vector<int> p;
    std::vector<int> g;
    p.reserve(predictions.size());
    g.reserve(predictions.size());
    for (const auto& [id, label] : predictions) {
        auto it = gold_by_id.find(id);
        if (it == gold_by_id.end()) {
            throw std::invalid_argument("evaluate_model: prediction id " +
                                        std::to_string(id) + " has no gold label");
        }
        p.push_back(label);
        g.push_back(it->second);
    }
    return metrics(confusion(p, g));
}

// --- gold test sets ----------------------------------------------------------

// One row of a delimited gold file: id, query, then either one gold label
// or one label per annotator.
struct GoldItem {
    long long id = 0;
    std::string query;
    std::vector<int> annotator_labels;  // empty when the file carries a gold column
    int gold = 0;
};

// Tab-separated; 3 columns = id, query, gold; 2 + R columns = id, query and R
// annotator labels whose majority becomes the gold label.
inline std::vector<GoldItem> load_gold_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open gold file: " + path);
    std::vector<GoldItem> items;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (cols.size() < 3) {
            throw std::runtime_error("gold file " + path + " line " +
                                     std::to_string(line_no) + ": expected >= 3 columns");
        }
        GoldItem item;
        try {
            item.id = std::stoll(cols[0]);
            item.query = cols[1];
            if (cols.size() == 3) {
                item.gold = std::stoi(cols[2]);
            } else {
                for (std::size_t i = 2; i < cols.size(); ++i) {
                    item.annotator_labels.push_back(std::stoi(cols[i]));
                }
                item.gold = majority_gold(item.annotator_labels);
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("gold file " + path + " line " +
                                     std::to_string(line_no) + ": " + e.what());
        }
        if (item.gold != 0 && item.gold != 1) {
            throw std::runtime_error("gold file " + path + " line " +
                                     std::to_string(line_no) + ": label not in {0,1}");
        }
        items.push_back(std::move(item));
    }
    return items;
}

// Builds the two-category ratings table from annotator columns. Items
// without annotator labels are skipped.
inline RatingsTable ratings_from_gold(const std::vector<GoldItem>& items) {
    RatingsTable table;
    for (const auto& item : items) {
        if (item.annotator_labels.empty()) continue;
        long long zeros = 0;
        long long ones = 0;
        for (int l : item.annotator_labels) l == 1 ? ++ones : ++zeros;
        if (table.n_raters == 0) {
            table.n_raters = static_cast<int>(item.annotator_labels.size());
        }
        table.counts.push_back({zeros, ones});
    }
    return table;
}

// --- report rendering ----------------------------------------------------------

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["code_intent"] = {{"precision", r.code_intent.precision},
                        {"recall", r.code_intent.recall},
                        {"f1", r.code_intent.f1}};
    j["not_code_intent"] = {{"precision", r.not_code_intent.precision},
                            {"recall", r.not_code_intent.recall},
                            {"f1", r.not_code_intent.f1}};
    j["n"] = r.n;
    j["prevalence"] = r.prevalence;
    j["flags"] = r.flags;
    return j;
}

// Aligned plain-text table with the accuracy / per-class P, R, F1 layout.
inline std::string render_report_table(
    const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::ostringstream out;
    std::size_t name_width = 5;
    for (const auto& [name, report] : rows) {
        name_width = std::max(name_width, name.size());
    }
    out << std::left << std::setw(static_cast<int>(name_width) + 2) << "Model"
        << std::right << std::setw(10) << "Accuracy" << std::setw(8) << "P(1)"
        << std::setw(8) << "R(1)" << std::setw(8) << "F1(1)" << std::setw(8)
        << "P(0)" << std::setw(8) << "R(0)" << std::setw(8) << "F1(0)" << '\n';
    out << std::fixed << std::setprecision(3);
    for (const auto& [name, r] : rows) {
        out << std::left << std::setw(static_cast<int>(name_width) + 2) << name
            << std::right << std::setw(10) << r.accuracy << std::setw(8)
            << r.code_intent.precision << std::setw(8) << r.code_intent.recall
            << std::setw(8) << r.code_intent.f1 << std::setw(8)
            << r.not_code_intent.precision << std::setw(8)
            << r.not_code_intent.recall << std::setw(8) << r.not_code_intent.f1
            << '\n';
    }
    return out.str();
}

}  // namespace codeintent
