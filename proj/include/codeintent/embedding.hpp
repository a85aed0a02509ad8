#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "codeintent/random.hpp"
#include "codeintent/text.hpp"

namespace codeintent {

struct Vocabulary {
    std::vector<std::string> tokens;   // index -> token, dense 0..V-1
    std::vector<long long> counts;     // parallel to tokens
    std::map<std::string, int> index;  // token -> index
    int min_count = 1;

    std::size_t size() const { return tokens.size(); }

    int lookup(const std::string& token) const {
        auto it = index.find(token);
        return it == index.end() ? -1 : it->second;
    }
};

// Keeps tokens with count >= min_count; indices in descending count order,
// ties lexicographic.
inline Vocabulary build_vocab(const std::vector<TokenizedQuery>& corpus,
                              int min_count) {
    if (min_count < 1) throw std::invalid_argument("build_vocab: min_count >= 1");
    std::map<std::string, long long> counts;
    for (const auto& tokens : corpus) {
        for (const auto& t : tokens) ++counts[t];
    }
    std::vector<std::pair<std::string, long long>> kept;
    for (const auto& [token, count] : counts) {
        if (count >= min_count) kept.emplace_back(token, count);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (kept.empty()) {
        throw std::runtime_error("build_vocab: no token reaches min_count " +
                                 std::to_string(min_count));
    }
    Vocabulary vocab;
    vocab.min_count = min_count;
    for (const auto& [token, count] : kept) {
        vocab.index[token] = static_cast<int>(vocab.tokens.size());
        vocab.tokens.push_back(token);
        vocab.counts.push_back(count);
    }
    return vocab;
}

struct SkipgramConfig {
    int dim = 100;
    int window = 3;
    int negatives = 5;
    int epochs = 10;
    double learning_rate = 0.025;  // linear decay over all updates
    int min_count = 2;
};

struct EmbeddingTable {
    int dim = 0;
    Vocabulary vocab;
    std::vector<double> input;    // V x dim, row-major; the word vectors
    std::vector<double> context;  // V x dim, training-time only
    std::vector<double> epoch_losses;  // mean pair loss per epoch

    const double* vec(int index) const { return &input[index * dim]; }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + e^x) without overflow
inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double dot(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

// Loss of one skip-gram positive pair with negative samples:
//   -log sigmoid(u_ctx . v) - sum_k log sigmoid(-u_k . v)
inline double sgns_pair_loss(const std::vector<double>& center,
                             const std::vector<double>& context,
                             const std::vector<std::vector<double>>& negatives) {
    const int d = static_cast<int>(center.size());
    double loss = detail::softplus(-detail::dot(context.data(), center.data(), d));
    for (const auto& neg : negatives) {
        loss += detail::softplus(detail::dot(neg.data(), center.data(), d));
    }
    return loss;
}

// Analytic gradients of sgns_pair_loss with respect to every vector. The
// training loop applies exactly these expressions, so checking them against
// finite differences covers the update math.
struct SgnsGradients {
    std::vector<double> center;
    std::vector<double> context;
    std::vector<std::vector<double>> negatives;
};

inline SgnsGradients sgns_pair_gradients(
    const std::vector<double>& center, const std::vector<double>& context,
    const std::vector<std::vector<double>>& negatives) {
    const int d = static_cast<int>(center.size());
    SgnsGradients g;
    g.center.assign(d, 0.0);
    g.context.assign(d, 0.0);
    double gp = detail::sigmoid(detail::dot(context.data(), center.data(), d)) - 1.0;
    for (int i = 0; i < d; ++i) {
        g.center[i] += gp * context[i];
        g.context[i] = gp * center[i];
    }
    for (const auto& neg : negatives) {
        double gn = detail::sigmoid(detail::dot(neg.data(), center.data(), d));
        std::vector<double> gneg(d);
        for (int i = 0; i < d; ++i) {
            g.center[i] += gn * neg[i];
            gneg[i] = gn * center[i];
        }
        g.negatives.push_back(std::move(gneg));
    }
    return g;
}

namespace detail {

// Relative error with both-near-zero forgiveness: coordinates where analytic
// and numeric gradients are both below 1e-6 in magnitude contribute zero.
inline double gradient_rel_error(double analytic, double numeric) {
    double aa = std::abs(analytic);
    double an = std::abs(numeric);
    if (aa < 1e-6 && an < 1e-6) return 0.0;
    return std::abs(analytic - numeric) / std::max(aa, an);
}

inline void check_fd_eps(double eps) {
    if (eps < 1e-8 || eps > 1e-4) {
        throw std::invalid_argument("gradient check: eps must lie in [1e-8, 1e-4]");
    }
}

}  // namespace detail

// Max relative error of the skip-gram pair-loss gradients (center, context
// and negative vectors) against central finite differences.
inline double gradient_check_sgns(const std::vector<double>& center,
                                  const std::vector<double>& context,
                                  const std::vector<std::vector<double>>& negatives,
                                  double eps) {
    detail::check_fd_eps(eps);
    auto analytic = sgns_pair_gradients(center, context, negatives);
    auto probe_center = center;
    auto probe_context = context;
    auto probe_negs = negatives;
    auto fd = [&](double* slot, double analytic_value) {
        const double saved = *slot;
        *slot = saved + eps;
        double up = sgns_pair_loss(probe_center, probe_context, probe_negs);
        *slot = saved - eps;
        double down = sgns_pair_loss(probe_center, probe_context, probe_negs);
        *slot = saved;
        return detail::gradient_rel_error(analytic_value, (up - down) / (2 * eps));
    };
    double max_err = 0.0;
    for (std::size_t i = 0; i < center.size(); ++i) {
        max_err = std::max(max_err, fd(&probe_center[i], analytic.center[i]));
        max_err = std::max(max_err, fd(&probe_context[i], analytic.context[i]));
        for (std::size_t k = 0; k < negatives.size(); ++k) {
            max_err = std::max(max_err, fd(&probe_negs[k][i], analytic.negatives[k][i]));
        }
    }
    return max_err;
}

// Skip-gram with negative sampling, trained from scratch on the tokenized
// corpus. Single-threaded; bit-identical output for a fixed seed. Negatives
// come from the unigram distribution raised to 0.75; the learning rate
// decays linearly over all planned updates with a 1e-4 relative floor.
inline EmbeddingTable train_skipgram(const std::vector<TokenizedQuery>& corpus,
                                     const SkipgramConfig& config,
                                     std::uint64_t seed) {
    EmbeddingTable table;
    table.dim = config.dim;
    table.vocab = build_vocab(corpus, config.min_count);
    const int d = config.dim;
    const auto v_count = static_cast<int>(table.vocab.size());

    // out-of-vocabulary tokens are dropped from the training stream
    std::vector<std::vector<int>> sequences;
    long long pairs_per_epoch = 0;
    for (const auto& tokens : corpus) {
        std::vector<int> seq;
        for (const auto& t : tokens) {
            int idx = table.vocab.lookup(t);
            if (idx >= 0) seq.push_back(idx);
        }
        if (seq.empty()) continue;
        const auto len = static_cast<long long>(seq.size());
        for (long long t = 0; t < len; ++t) {
            long long lo = std::max<long long>(0, t - config.window);
            long long hi = std::min(len - 1, t + config.window);
            pairs_per_epoch += hi - lo;  // excludes the center itself
        }
        sequences.push_back(std::move(seq));
    }
    if (pairs_per_epoch == 0) {
        throw std::runtime_error(
            "train_skipgram: corpus has no training pairs after vocabulary "
            "filtering");
    }

    std::vector<double> unigram_cdf;
    double acc = 0.0;
    for (long long c : table.vocab.counts) {
        acc += std::pow(static_cast<double>(c), 0.75);
        unigram_cdf.push_back(acc);
    }

    Rng rng(seed);
    table.input.resize(static_cast<std::size_t>(v_count) * d);
    table.context.assign(static_cast<std::size_t>(v_count) * d, 0.0);
    for (auto& w : table.input) w = (rng.uniform() - 0.5) / d;

    const double total_updates =
        static_cast<double>(pairs_per_epoch) * config.epochs;
    long long processed = 0;
    std::vector<double> center_grad(d);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        long long loss_pairs = 0;
        for (const auto& seq : sequences) {
            const auto len = static_cast<long long>(seq.size());
            for (long long t = 0; t < len; ++t) {
                double* v = &table.input[static_cast<std::size_t>(seq[t]) * d];
                long long lo = std::max<long long>(0, t - config.window);
                long long hi = std::min(len - 1, t + config.window);
                for (long long c = lo; c <= hi; ++c) {
                    if (c == t) continue;
                    double lr = config.learning_rate *
                                std::max(1.0 - processed / total_updates, 1e-4);
                    ++processed;
                    int ctx = seq[c];
                    std::fill(center_grad.begin(), center_grad.end(), 0.0);
                    double pair_loss = 0.0;
                    // positive target, then sampled negatives
                    {
                        double* u = &table.context[static_cast<std::size_t>(ctx) * d];
                        double z = detail::dot(u, v, d);
                        pair_loss += detail::softplus(-z);
                        double g = detail::sigmoid(z) - 1.0;
                        for (int i = 0; i < d; ++i) {
                            center_grad[i] += g * u[i];
                            u[i] -= lr * g * v[i];
                        }
                    }
                    for (int k = 0; k < config.negatives; ++k) {
                        int neg = static_cast<int>(rng.categorical(unigram_cdf));
                        if (neg == ctx) continue;
                        double* u = &table.context[static_cast<std::size_t>(neg) * d];
                        double z = detail::dot(u, v, d);
                        pair_loss += detail::softplus(z);
                        double g = detail::sigmoid(z);
                        for (int i = 0; i < d; ++i) {
                            center_grad[i] += g * u[i];
                            u[i] -= lr * g * v[i];
                        }
                    }
                    for (int i = 0; i < d; ++i) v[i] -= lr * center_grad[i];
                    loss_sum += pair_loss;
                    ++loss_pairs;
                }
            }
        }
        table.epoch_losses.push_back(loss_sum / static_cast<double>(loss_pairs));
    }
    return table;
}

// Mean of the in-vocabulary token vectors; all-OOV (or empty) input yields
// the zero vector.
inline std::vector<double> query_embedding(const TokenizedQuery& tokens,
                                           const EmbeddingTable& table) {
    std::vector<double> mean(table.dim, 0.0);
    int hits = 0;
    for (const auto& t : tokens) {
        int idx = table.vocab.lookup(t);
        if (idx < 0) continue;
        const double* v = table.vec(idx);
        for (int i = 0; i < table.dim; ++i) mean[i] += v[i];
        ++hits;
    }
    if (hits > 0) {
        for (auto& x : mean) x /= hits;
    }
    return mean;
}

// Stacks in-vocabulary token vectors in order into a max_len x dim matrix,
// truncating at max_len and zero-padding the tail.
inline std::vector<double> sequence_embedding(const TokenizedQuery& tokens,
                                              const EmbeddingTable& table,
                                              int max_len) {
    if (max_len < 1) throw std::invalid_argument("sequence_embedding: max_len >= 1");
    std::vector<double> seq(static_cast<std::size_t>(max_len) * table.dim, 0.0);
    int row = 0;
    for (const auto& t : tokens) {
        if (row >= max_len) break;
        int idx = table.vocab.lookup(t);
        if (idx < 0) continue;
        const double* v = table.vec(idx);
        for (int i = 0; i < table.dim; ++i) seq[row * table.dim + i] = v[i];
        ++row;
    }
    return seq;
}

namespace detail {

inline std::string format_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

}  // namespace detail

// Line-oriented text format: first line "V d", then one line per token with
// the token followed by d decimal floats. Values round-trip exactly.
inline void save_embedding_table(const std::string& path,
                                 const EmbeddingTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write embedding table: " + path);
    out << table.vocab.size() << ' ' << table.dim << '\n';
    for (std::size_t idx = 0; idx < table.vocab.size(); ++idx) {
        out << table.vocab.tokens[idx];
        const double* v = table.vec(static_cast<int>(idx));
        for (int i = 0; i < table.dim; ++i) {
            out << ' ' << detail::format_double(v[i]);
        }
        out << '\n';
    }
}

inline EmbeddingTable load_embedding_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding table: " + path);
    std::size_t v_count = 0;
    int d = 0;
    if (!(in >> v_count >> d) || d <= 0) {
        throw std::runtime_error("bad embedding table header in " + path);
    }
    EmbeddingTable table;
    table.dim = d;
    table.input.resize(v_count * static_cast<std::size_t>(d));
    for (std::size_t idx = 0; idx < v_count; ++idx) {
        std::string token;
        if (!(in >> token)) {
            throw std::runtime_error("truncated embedding table: " + path);
        }
        table.vocab.index[token] = static_cast<int>(idx);
        table.vocab.tokens.push_back(token);
        table.vocab.counts.push_back(0);  // counts are not serialized
        for (int i = 0; i < d; ++i) {
            if (!(in >> table.input[idx * d + i])) {
                throw std::runtime_error("truncated embedding row in " + path);
            }
        }
    }
    return table;
}

}  // namespace codeintent
