#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "codeintent/labeling.hpp"
#include "codeintent/random.hpp"

namespace codeintent {

// Maps an LF output in {-1, 0, 1} to an emission-table slot in {0, 1, 2}.
inline int output_slot(int value) {
    if (value < -1 || value > 1) {
        throw std::invalid_argument("LF output out of {-1,0,1}: " +
                                    std::to_string(value));
    }
    return value + 1;
}

// Generative model of LF outputs: class prior pi = P(y = 1) and, per LF j
// and true class y, a categorical emission distribution over {-1, 0, 1}
// (Dawid-Skene with an abstain category). Conditional independence given y.
struct LabelModelParams {
    double pi = 0.5;
    // emissions[j][y][slot], slot = output + 1
    std::vector<std::array<std::array<double, 3>, 2>> emissions;
    std::vector<std::string> lf_names;  // optional, parallel to emissions

    // fit metadata
    int iterations = 0;
    std::vector<double> log_likelihood_trajectory;
    double final_log_likelihood = std::numeric_limits<double>::quiet_NaN();

    std::size_t n_lfs() const { return emissions.size(); }
};

inline void validate_params(const LabelModelParams& params) {
    if (!(params.pi > 0.0 && params.pi < 1.0)) {
        throw std::invalid_argument("label model pi must lie in (0,1)");
    }
    if (params.emissions.empty()) {
        throw std::invalid_argument("label model has no emission tables");
    }
    for (std::size_t j = 0; j < params.emissions.size(); ++j) {
        for (int y = 0; y < 2; ++y) {
            double sum = 0.0;
            for (double p : params.emissions[j][y]) {
                if (p < 0.0) {
                    throw std::invalid_argument("negative emission probability");
                }
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) {
                throw std::invalid_argument(
                    "emission distribution of LF " + std::to_string(j) +
                    " class " + std::to_string(y) + " does not sum to 1");
            }
        }
    }
}

// Per-row votes, abstains ignored; strict majority wins, ties (including
// all-abstain rows) are decided by a fair coin from the seeded generator.
// Coin flips are drawn only on ties, in row order, so the result is a pure
// function of (matrix, seed).
inline std::vector<int> majority_vote(const LabelMatrix& matrix,
                                      std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> labels(matrix.rows);
    for (std::size_t i = 0; i < matrix.rows; ++i) {
        int ones = 0;
        int zeros = 0;
        for (std::size_t j = 0; j < matrix.cols; ++j) {
            int v = matrix.at(i, j);
            if (v == 1) ++ones;
            else if (v == 0) ++zeros;
        }
        if (ones > zeros) labels[i] = 1;
        else if (zeros > ones) labels[i] = 0;
        else labels[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    return labels;
}

// P(y | row) by Bayes: p_y proportional to pi_y * prod_j emissions[j][y][row_j].
inline std::pair<double, double> posterior(const LabelModelParams& params,
                                           std::span<const int> row) {
    if (row.size() != params.emissions.size()) {
        throw std::invalid_argument("posterior: row length != number of LFs");
    }
    double p0 = 1.0 - params.pi;
    double p1 = params.pi;
    for (std::size_t j = 0; j < row.size(); ++j) {
        int slot = output_slot(row[j]);
        p0 *= params.emissions[j][0][slot];
        p1 *= params.emissions[j][1][slot];
    }
    double total = p0 + p1;
    if (total <= 0.0) {
        throw std::runtime_error(
            "posterior: both class scores are zero (degenerate parameters)");
    }
    return {p0 / total, p1 / total};
}

// Observed-data log-likelihood: sum_i log sum_y pi_y prod_j theta_j[y][row_ij].
inline double log_likelihood(const LabelModelParams& params,
                             const LabelMatrix& matrix) {
    if (matrix.cols != params.emissions.size()) {
        throw std::invalid_argument("log_likelihood: matrix/params LF mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < matrix.rows; ++i) {
        double p0 = 1.0 - params.pi;
        double p1 = params.pi;
        for (std::size_t j = 0; j < matrix.cols; ++j) {
            int slot = output_slot(matrix.at(i, j));
            p0 *= params.emissions[j][0][slot];
            p1 *= params.emissions[j][1][slot];
        }
        total += std::log(p0 + p1);
    }
    return total;
}

struct EmInit {
    double vote_confidence = 0.7;  // responsibility mass on the majority vote
    std::uint64_t seed = 0;        // tie-breaking seed for the vote
};

namespace detail {

inline LabelModelParams em_m_step(const LabelMatrix& matrix,
                                  const std::vector<std::array<double, 2>>& q,
                                  double smoothing) {
    LabelModelParams params;
    params.lf_names = matrix.lf_names;
    params.emissions.assign(matrix.cols, {});
    double q1_sum = 0.0;
    for (const auto& qi : q) q1_sum += qi[1];
    double pi = q1_sum / static_cast<double>(matrix.rows);
    params.pi = std::min(std::max(pi, 1e-12), 1.0 - 1e-12);
    // counts[j][y][slot] accumulated in fixed row order
    std::vector<std::array<std::array<double, 3>, 2>> counts(
        matrix.cols, {{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}}});
    std::array<double, 2> class_mass = {0.0, 0.0};
    for (std::size_t i = 0; i < matrix.rows; ++i) {
        class_mass[0] += q[i][0];
        class_mass[1] += q[i][1];
        for (std::size_t j = 0; j < matrix.cols; ++j) {
            int slot = output_slot(matrix.at(i, j));
            counts[j][0][slot] += q[i][0];
            counts[j][1][slot] += q[i][1];
        }
    }
    for (std::size_t j = 0; j < matrix.cols; ++j) {
        for (int y = 0; y < 2; ++y) {
            double denom = 3.0 * smoothing + class_mass[y];
            for (int slot = 0; slot < 3; ++slot) {
                params.emissions[j][y][slot] =
                    (smoothing + counts[j][y][slot]) / denom;
            }
        }
    }
    return params;
}

inline void em_e_step(const LabelModelParams& params, const LabelMatrix& matrix,
                      std::vector<std::array<double, 2>>& q) {
    for (std::size_t i = 0; i < matrix.rows; ++i) {
        double p0 = 1.0 - params.pi;
        double p1 = params.pi;
        for (std::size_t j = 0; j < matrix.cols; ++j) {
            int slot = output_slot(matrix.at(i, j));
            p0 *= params.emissions[j][0][slot];
            p1 *= params.emissions[j][1][slot];
        }
        double total = p0 + p1;
        if (total <= 0.0) {
            throw std::runtime_error("EM E-step hit a zero-probability row");
        }
        q[i] = {p0 / total, p1 / total};
    }
}

// The class each LF votes for when it does not abstain, derived from the
// matrix column (most frequent non-abstain value, ties to 1). Returns -1 for
// columns that never fire.
inline int column_emit_label(const LabelMatrix& matrix, std::size_t j) {
    long long ones = 0;
    long long zeros = 0;
    for (std::size_t i = 0; i < matrix.rows; ++i) {
        int v = matrix.at(i, j);
        if (v == 1) ++ones;
        else if (v == 0) ++zeros;
    }
    if (ones == 0 && zeros == 0) return -1;
    return ones >= zeros ? 1 : 0;
}

}  // namespace detail

// Fits the generative model by EM. Responsibilities are seeded from the
// majority vote at the given confidence; each iteration runs the smoothed
// M-step followed by an E-step. Iteration stops when |delta log-likelihood|
// < tol, when max_iter is reached, or when an update would lower the
// observed log-likelihood (the Dirichlet-smoothed M-step does not carry the
// exact-EM monotonicity guarantee, so such a step is reverted and treated as
// convergence). After convergence the class-anchoring rule resolves the
// label-switching ambiguity: if fewer than half the firing LFs emit their
// own vote more readily under the matching class than under the opposite
// one, classes are swapped in all parameters.
inline LabelModelParams fit_em(const LabelMatrix& matrix, const EmInit& init,
                               int max_iter = 100, double tol = 1e-6,
                               double smoothing = 0.01) {
    if (matrix.rows == 0 || matrix.cols == 0) {
        throw std::invalid_argument("fit_em: empty label matrix");
    }
    if (max_iter < 1) throw std::invalid_argument("fit_em: max_iter must be >= 1");
    bool any_vote = false;
    for (int v : matrix.values) {
        if (v != kAbstain) {
            any_vote = true;
            break;
        }
    }
    if (!any_vote) {
        throw std::runtime_error(
            "fit_em: all-abstain matrix, parameters are unidentifiable");
    }

    std::vector<int> votes = majority_vote(matrix, init.seed);
    std::vector<std::array<double, 2>> q(matrix.rows);
    for (std::size_t i = 0; i < matrix.rows; ++i) {
        double conf = init.vote_confidence;
        q[i][votes[i]] = conf;
        q[i][1 - votes[i]] = 1.0 - conf;
    }

    LabelModelParams params;
    LabelModelParams prev_params;
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iter; ++iter) {
        LabelModelParams next = detail::em_m_step(matrix, q, smoothing);
        double ll = log_likelihood(next, matrix);
        if (iter > 0 && ll < prev_ll) {
            params = prev_params;  // revert the non-improving smoothed step
            break;
        }
        params = next;
        params.iterations = iter + 1;
        params.log_likelihood_trajectory.push_back(ll);
        if (iter > 0 && std::abs(ll - prev_ll) < tol) break;
        prev_ll = ll;
        prev_params = params;
        detail::em_e_step(params, matrix, q);
    }
    params.final_log_likelihood = params.log_likelihood_trajectory.back();

    // class anchoring
    std::size_t firing = 0;
    std::size_t aligned = 0;
    for (std::size_t j = 0; j < matrix.cols; ++j) {
        int e = detail::column_emit_label(matrix, j);
        if (e < 0) continue;
        ++firing;
        int slot = output_slot(e);
        if (params.emissions[j][e][slot] >= params.emissions[j][1 - e][slot]) {
            ++aligned;
        }
    }
    if (firing > 0 && 2 * aligned < firing) {
        params.pi = 1.0 - params.pi;
        for (auto& em : params.emissions) std::swap(em[0], em[1]);
    }
    return params;
}

// Per-row class posteriors under fitted parameters.
struct PosteriorLabels {
    std::vector<std::array<double, 2>> probs;  // row i = (P(y=0), P(y=1))
};

inline PosteriorLabels compute_posteriors(const LabelModelParams& params,
                                          const LabelMatrix& matrix) {
    PosteriorLabels out;
    out.probs.reserve(matrix.rows);
    std::vector<int> row(matrix.cols);
    for (std::size_t i = 0; i < matrix.rows; ++i) {
        for (std::size_t j = 0; j < matrix.cols; ++j) row[j] = matrix.at(i, j);
        auto [p0, p1] = posterior(params, row);
        out.probs.push_back({p0, p1});
    }
    return out;
}

enum class LabelMode { Hard, Soft };

inline LabelMode parse_label_mode(const std::string& s) {
    if (s == "hard") return LabelMode::Hard;
    if (s == "soft") return LabelMode::Soft;
    throw std::invalid_argument("unknown label mode: " + s +
                                " (expected hard or soft)");
}

// Hard mode: argmax per row, ties to class 1. Soft mode: p1 unchanged.
inline std::vector<double> assign_labels(const PosteriorLabels& posteriors,
                                         LabelMode mode) {
    std::vector<double> labels;
    labels.reserve(posteriors.probs.size());
    for (const auto& p : posteriors.probs) {
        if (mode == LabelMode::Hard) {
            labels.push_back(p[1] >= p[0] ? 1.0 : 0.0);
        } else {
            labels.push_back(p[1]);
        }
    }
    return labels;
}

// Draws (matrix, true labels) from the generative model: y_i ~ Bernoulli(pi),
// lambda_ij ~ emissions[j][y_i]. The sampler is the recovery oracle for
// fit_em. Deterministic given seed.
inline std::pair<LabelMatrix, std::vector<int>> sample_synthetic(
    const LabelModelParams& params, std::size_t m, std::uint64_t seed) {
    validate_params(params);
    const std::size_t n = params.n_lfs();
    Rng rng(seed);
    LabelMatrix matrix;
    matrix.rows = m;
    matrix.cols = n;
    matrix.values.resize(m * n);
    if (params.lf_names.size() == n) {
        matrix.lf_names = params.lf_names;
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            matrix.lf_names.push_back("lf" + std::to_string(j));
        }
    }
    std::vector<int> truth(m);
    // per-(j, y) cumulative emission weights
    std::vector<std::array<std::vector<double>, 2>> cdfs(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (int y = 0; y < 2; ++y) {
            double acc = 0.0;
            for (int slot = 0; slot < 3; ++slot) {
                acc += params.emissions[j][y][slot];
                cdfs[j][y].push_back(acc);
            }
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        int y = rng.bernoulli(params.pi) ? 1 : 0;
        truth[i] = y;
        matrix.query_ids.push_back(static_cast<long long>(i + 1));
        for (std::size_t j = 0; j < n; ++j) {
            int slot = static_cast<int>(rng.categorical(cdfs[j][y]));
            matrix.at(i, j) = slot - 1;
        }
    }
    return {std::move(matrix), std::move(truth)};
}

// --- serialization ----------------------------------------------------------

inline nlohmann::ordered_json label_model_to_json(const LabelModelParams& params) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["pi"] = params.pi;
    nlohmann::ordered_json lfs = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < params.emissions.size(); ++i) {
        nlohmann::ordered_json lf;
        lf["name"] = i < params.lf_names.size() ? params.lf_names[i]
                                                : "lf" + std::to_string(i);
        // distributions over outputs (-1, 0, 1)
        lf["class0"] = params.emissions[i][0];
        lf["class1"] = params.emissions[i][1];
        lfs.push_back(std::move(lf));
    }
    j["emissions"] = std::move(lfs);
    j["iterations"] = params.iterations;
    j["final_log_likelihood"] = params.final_log_likelihood;
    return j;
}

inline void save_label_model(const std::string& path,
                             const LabelModelParams& params) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write label model: " + path);
    out << label_model_to_json(params).dump(2) << '\n';
}

inline LabelModelParams load_label_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open label model: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    LabelModelParams params;
    params.pi = j.at("pi").get<double>();
    for (const auto& lf : j.at("emissions")) {
        params.lf_names.push_back(lf.at("name").get<std::string>());
        std::array<std::array<double, 3>, 2> em{};
        em[0] = lf.at("class0").get<std::array<double, 3>>();
        em[1] = lf.at("class1").get<std::array<double, 3>>();
        params.emissions.push_back(em);
    }
    params.iterations = j.at("iterations").get<int>();
    params.final_log_likelihood = j.at("final_log_likelihood").get<double>();
    validate_params(params);
    return params;
}

// Training-label artifact: one row per query, tab-separated id, p0, p1.
inline void save_training_labels(const std::string& path,
                                 const std::vector<long long>& query_ids,
                                 const PosteriorLabels& posteriors) {
    if (query_ids.size() != posteriors.probs.size()) {
        throw std::invalid_argument("training labels: id/posterior size mismatch");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write training labels: " + path);
    out.precision(17);
    for (std::size_t i = 0; i < query_ids.size(); ++i) {
        out << query_ids[i] << '\t' << posteriors.probs[i][0] << '\t'
            << posteriors.probs[i][1] << '\n';
    }
}

inline std::pair<std::vector<long long>, PosteriorLabels> load_training_labels(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open training labels: " + path);
    std::vector<long long> ids;
    PosteriorLabels posteriors;
    long long id = 0;
    double p0 = 0.0;
    double p1 = 0.0;
    while (in >> id >> p0 >> p1) {
        ids.push_back(id);
        posteriors.probs.push_back({p0, p1});
    }
    return {std::move(ids), std::move(posteriors)};
}

}  // namespace codeintent
