#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "codeintent/embedding.hpp"
#include "codeintent/label_model.hpp"
#include "codeintent/random.hpp"
#include "codeintent/text.hpp"

namespace codeintent {

namespace detail {

// binary cross-entropy against a soft target, in logit form:
// softplus(z) - t*z == -t log sigmoid(z) - (1-t) log(1 - sigmoid(z))
inline double bce_from_logit(double z, double target) {
    return softplus(z) - target * z;
}

// keeps reported probabilities strictly inside (0,1)
inline double clamp_probability(double p) {
    return std::min(std::max(p, 1e-12), 1.0 - 1e-12);
}

}  // namespace detail

struct TrainConfig {
    int epochs = 20;
    int batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    LabelMode label_mode = LabelMode::Soft;
    double validation_fraction = 0.2;
    double l2 = 1e-4;  // used by the logistic model only

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("train config: epochs >= 1");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size >= 1");
        if (!(learning_rate > 0.0)) {
            throw std::invalid_argument("train config: learning rate > 0");
        }
        if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
            throw std::invalid_argument("train config: validation fraction in [0,1)");
        }
    }
};

// --- logistic regression ----------------------------------------------------

struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
    double l2 = 1e-4;
};

inline double predict_logistic(const LogisticModel& model,
                               std::span<const double> x) {
    if (x.size() != model.weights.size()) {
        throw std::invalid_argument("predict_logistic: feature dimension " +
                                    std::to_string(x.size()) + " != model dimension " +
                                    std::to_string(model.weights.size()));
    }
    double z = model.bias;
    for (std::size_t i = 0; i < x.size(); ++i) z += model.weights[i] * x[i];
    return detail::clamp_probability(detail::sigmoid(z));
}

// Minimizes mean BCE(t, sigmoid(w.x + b)) + l2*||w||^2 by mini-batch SGD.
// Weights start at zero; the seed drives batch shuffling only.
inline LogisticModel train_logistic(const std::vector<std::vector<double>>& features,
                                    const std::vector<double>& targets,
                                    const TrainConfig& config) {
    config.validate();
    if (features.empty()) throw std::invalid_argument("train_logistic: no data");
    if (features.size() != targets.size()) {
        throw std::invalid_argument("train_logistic: features/targets size mismatch");
    }
    const std::size_t dim = features[0].size();
    for (const auto& x : features) {
        if (x.size() != dim) {
            throw std::invalid_argument("train_logistic: inconsistent feature dims");
        }
    }
    LogisticModel model;
    model.weights.assign(dim, 0.0);
    model.l2 = config.l2;
    Rng rng(config.seed);
    std::vector<std::size_t> order(features.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> grad_w(dim);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += config.batch_size) {
            std::size_t end = std::min(order.size(),
                                       start + static_cast<std::size_t>(config.batch_size));
            std::fill(grad_w.begin(), grad_w.end(), 0.0);
            double grad_b = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& x = features[order[k]];
                double z = model.bias;
                for (std::size_t i = 0; i < dim; ++i) z += model.weights[i] * x[i];
                double g = detail::sigmoid(z) - targets[order[k]];
                for (std::size_t i = 0; i < dim; ++i) grad_w[i] += g * x[i];
                grad_b += g;
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = 0; i < dim; ++i) {
                model.weights[i] -= config.learning_rate *
                                    (grad_w[i] * inv + 2.0 * config.l2 * model.weights[i]);
            }
            model.bias -= config.learning_rate * grad_b * inv;
        }
    }
    return model;
}

// --- text CNN ----------------------------------------------------------------

// Convolution filters of several widths over the token axis, ReLU, global
// max-pool per filter, one dense output unit, sigmoid.
struct TextCnnModel {
    int max_len = 16;
    int dim = 0;
    std::vector<int> widths = {2, 3, 4};
    int filters_per_width = 64;
    // conv_w[wi] has filters_per_width * widths[wi] * dim entries, filter-major
    std::vector<std::vector<double>> conv_w;
    std::vector<std::vector<double>> conv_b;  // conv_b[wi] has filters_per_width
    std::vector<double> dense_w;              // widths.size() * filters_per_width
    double dense_b = 0.0;

    void validate_shape() const {
        if (dim < 1) throw std::invalid_argument("cnn: embedding dim >= 1");
        if (widths.empty()) throw std::invalid_argument("cnn: no filter widths");
        for (int w : widths) {
            if (w < 1) throw std::invalid_argument("cnn: filter width >= 1");
            if (w > max_len) {
                throw std::invalid_argument(
                    "cnn: max_len " + std::to_string(max_len) +
                    " is smaller than filter width " + std::to_string(w));
            }
        }
        if (conv_w.size() != widths.size() || conv_b.size() != widths.size()) {
            throw std::invalid_argument("cnn: filter tensor count mismatch");
        }
        for (std::size_t wi = 0; wi < widths.size(); ++wi) {
            auto expected = static_cast<std::size_t>(filters_per_width) *
                            widths[wi] * dim;
            if (conv_w[wi].size() != expected ||
                conv_b[wi].size() != static_cast<std::size_t>(filters_per_width)) {
                throw std::invalid_argument("cnn: filter tensor shape mismatch");
            }
        }
        if (dense_w.size() != widths.size() * static_cast<std::size_t>(filters_per_width)) {
            throw std::invalid_argument("cnn: dense layer shape mismatch");
        }
    }
};

// All parameters drawn from seeded uniform(-0.05, 0.05).
inline TextCnnModel init_cnn(int max_len, int dim, std::vector<int> widths,
                             int filters_per_width, Rng& rng) {
    TextCnnModel model;
    model.max_len = max_len;
    model.dim = dim;
    model.widths = std::move(widths);
    model.filters_per_width = filters_per_width;
    for (int w : model.widths) {
        std::vector<double> filt(static_cast<std::size_t>(filters_per_width) * w * dim);
        for (auto& x : filt) x = rng.uniform(-0.05, 0.05);
        model.conv_w.push_back(std::move(filt));
        std::vector<double> bias(filters_per_width);
        for (auto& x : bias) x = rng.uniform(-0.05, 0.05);
        model.conv_b.push_back(std::move(bias));
    }
    model.dense_w.resize(model.widths.size() *
                         static_cast<std::size_t>(filters_per_width));
    for (auto& x : model.dense_w) x = rng.uniform(-0.05, 0.05);
    model.dense_b = rng.uniform(-0.05, 0.05);
    model.validate_shape();
    return model;
}

namespace detail {

struct CnnForwardState {
    double logit = 0.0;
    double prob = 0.5;
    std::vector<double> pooled;   // per (width, filter)
    std::vector<int> best_pos;    // argmax position of the pre-activation
    std::vector<double> best_z;   // max pre-activation
    std::vector<double> second_z; // runner-up pre-activation (-inf if none)
};

inline CnnForwardState cnn_forward_state(const TextCnnModel& model,
                                         std::span<const double> seq) {
    model.validate_shape();
    if (seq.size() != static_cast<std::size_t>(model.max_len) * model.dim) {
        throw std::invalid_argument("cnn_forward: sequence shape mismatch");
    }
    const int d = model.dim;
    const int f_count = model.filters_per_width;
    CnnForwardState state;
    const std::size_t total = model.widths.size() * static_cast<std::size_t>(f_count);
    state.pooled.assign(total, 0.0);
    state.best_pos.assign(total, 0);
    state.best_z.assign(total, 0.0);
    state.second_z.assign(total, -std::numeric_limits<double>::infinity());
    for (std::size_t wi = 0; wi < model.widths.size(); ++wi) {
        const int w = model.widths[wi];
        const int positions = model.max_len - w + 1;
        const double* filt = model.conv_w[wi].data();
        for (int f = 0; f < f_count; ++f) {
            const double* wf = filt + static_cast<std::size_t>(f) * w * d;
            double best = -std::numeric_limits<double>::infinity();
            double second = -std::numeric_limits<double>::infinity();
            int best_p = 0;
            for (int p = 0; p < positions; ++p) {
                double z = model.conv_b[wi][f];
                const double* window = seq.data() + static_cast<std::size_t>(p) * d;
                for (int i = 0; i < w * d; ++i) z += wf[i] * window[i];
                if (z > best) {
                    second = best;
                    best = z;
                    best_p = p;
                } else if (z > second) {
                    second = z;
                }
            }
            const std::size_t k = wi * f_count + f;
            state.best_z[k] = best;
            state.second_z[k] = second;
            state.best_pos[k] = best_p;
            state.pooled[k] = std::max(best, 0.0);  // ReLU then max-pool
        }
    }
    double z = model.dense_b;
    for (std::size_t k = 0; k < total; ++k) z += model.dense_w[k] * state.pooled[k];
    state.logit = z;
    state.prob = clamp_probability(sigmoid(z));
    return state;
}

struct CnnGradients {
    std::vector<std::vector<double>> conv_w;
    std::vector<std::vector<double>> conv_b;
    std::vector<double> dense_w;
    double dense_b = 0.0;
};

inline CnnGradients cnn_zero_gradients(const TextCnnModel& model) {
    CnnGradients g;
    for (std::size_t wi = 0; wi < model.widths.size(); ++wi) {
        g.conv_w.emplace_back(model.conv_w[wi].size(), 0.0);
        g.conv_b.emplace_back(model.conv_b[wi].size(), 0.0);
    }
    g.dense_w.assign(model.dense_w.size(), 0.0);
    return g;
}

// Backpropagates BCE(target, prob) through the forward state; gradients are
// accumulated into `g`. Returns the sample loss.
inline double cnn_backward(const TextCnnModel& model, std::span<const double> seq,
                           double target, const CnnForwardState& state,
                           CnnGradients& g) {
    const int d = model.dim;
    const int f_count = model.filters_per_width;
    const double dlogit = sigmoid(state.logit) - target;
    g.dense_b += dlogit;
    for (std::size_t k = 0; k < state.pooled.size(); ++k) {
        g.dense_w[k] += dlogit * state.pooled[k];
    }
    for (std::size_t wi = 0; wi < model.widths.size(); ++wi) {
        const int w = model.widths[wi];
        for (int f = 0; f < f_count; ++f) {
            const std::size_t k = wi * f_count + f;
            if (state.best_z[k] <= 0.0) continue;  // ReLU flat region
            const double gk = dlogit * model.dense_w[k];
            g.conv_b[wi][f] += gk;
            const double* window =
                seq.data() + static_cast<std::size_t>(state.best_pos[k]) * d;
            double* gw = g.conv_w[wi].data() + static_cast<std::size_t>(f) * w * d;
            for (int i = 0; i < w * d; ++i) gw[i] += gk * window[i];
        }
    }
    return bce_from_logit(state.logit, target);
}

}  // namespace detail

inline double cnn_forward(const TextCnnModel& model, std::span<const double> seq) {
    return detail::cnn_forward_state(model, seq).prob;
}

// True when a max-pool argmax is nearly tied or a winning pre-activation sits
// near the ReLU kink; finite differences are invalid at such points.
inline bool cnn_pool_degenerate(const TextCnnModel& model,
                                std::span<const double> seq,
                                double margin = 1e-5) {
    auto state = detail::cnn_forward_state(model, seq);
    for (std::size_t k = 0; k < state.best_z.size(); ++k) {
        if (std::abs(state.best_z[k]) < margin) return true;
        if (state.best_z[k] > 0.0 &&
            state.best_z[k] - state.second_z[k] < margin) {
            return true;
        }
    }
    return false;
}

// Trains the CNN with mini-batch SGD on BCE against soft targets.
// Initialization and batch order come from the seed; single-threaded and
// bit-reproducible.
inline TextCnnModel train_cnn(const std::vector<std::vector<double>>& sequences,
                              const std::vector<double>& targets, int max_len,
                              int dim, const std::vector<int>& widths,
                              int filters_per_width, const TrainConfig& config) {
    config.validate();
    if (sequences.empty()) throw std::invalid_argument("train_cnn: no data");
    if (sequences.size() != targets.size()) {
        throw std::invalid_argument("train_cnn: sequences/targets size mismatch");
    }
    const auto expected = static_cast<std::size_t>(max_len) * dim;
    for (const auto& s : sequences) {
        if (s.size() != expected) {
            throw std::invalid_argument("train_cnn: sequence shape mismatch");
        }
    }
    Rng rng(config.seed);
    TextCnnModel model = init_cnn(max_len, dim, widths, filters_per_width, rng);
    std::vector<std::size_t> order(sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += config.batch_size) {
            std::size_t end = std::min(order.size(),
                                       start + static_cast<std::size_t>(config.batch_size));
            auto grads = detail::cnn_zero_gradients(model);
            for (std::size_t k = start; k < end; ++k) {
                const auto& seq = sequences[order[k]];
                auto state = detail::cnn_forward_state(model, seq);
                detail::cnn_backward(model, seq, targets[order[k]], state, grads);
            }
            const double step =
                config.learning_rate / static_cast<double>(end - start);
            for (std::size_t wi = 0; wi < model.widths.size(); ++wi) {
                for (std::size_t i = 0; i < model.conv_w[wi].size(); ++i) {
                    model.conv_w[wi][i] -= step * grads.conv_w[wi][i];
                }
                for (std::size_t f = 0; f < model.conv_b[wi].size(); ++f) {
                    model.conv_b[wi][f] -= step * grads.conv_b[wi][f];
                }
            }
            for (std::size_t i = 0; i < model.dense_w.size(); ++i) {
                model.dense_w[i] -= step * grads.dense_w[i];
            }
            model.dense_b -= step * grads.dense_b;
        }
    }
    return model;
}

// --- gradient checking --------------------------------------------------------

// Max relative error between the analytic gradient of
// BCE(t, sigmoid(w.x+b)) + l2*||w||^2 and central finite differences.
inline double gradient_check_logistic(const LogisticModel& model,
                                      const std::vector<double>& x, double target,
                                      double eps) {
    detail::check_fd_eps(eps);
    if (x.size() != model.weights.size()) {
        throw std::invalid_argument("gradient_check_logistic: dimension mismatch");
    }
    auto loss = [&x, target](const LogisticModel& m) {
        double z = m.bias;
        for (std::size_t i = 0; i < x.size(); ++i) z += m.weights[i] * x[i];
        double reg = 0.0;
        for (double w : m.weights) reg += w * w;
        return detail::bce_from_logit(z, target) + m.l2 * reg;
    };
    double z = model.bias;
    for (std::size_t i = 0; i < x.size(); ++i) z += model.weights[i] * x[i];
    const double g = detail::sigmoid(z) - target;
    double max_err = 0.0;
    LogisticModel probe = model;
    for (std::size_t i = 0; i <= x.size(); ++i) {
        double analytic;
        double* slot;
        if (i < x.size()) {
            analytic = g * x[i] + 2.0 * model.l2 * model.weights[i];
            slot = &probe.weights[i];
        } else {
            analytic = g;
            slot = &probe.bias;
        }
        const double saved = *slot;
        *slot = saved + eps;
        const double up = loss(probe);
        *slot = saved - eps;
        const double down = loss(probe);
        *slot = saved;
        max_err = std::max(max_err,
                           detail::gradient_rel_error(analytic, (up - down) / (2 * eps)));
    }
    return max_err;
}

// Max relative error between the full CNN backprop gradient and central
// finite differences for one (sequence, target) sample. Call sites should
// avoid degenerate pooling points (see cnn_pool_degenerate).
inline double gradient_check_cnn(const TextCnnModel& model,
                                 const std::vector<double>& seq, double target,
                                 double eps) {
    detail::check_fd_eps(eps);
    auto state = detail::cnn_forward_state(model, seq);
    auto grads = detail::cnn_zero_gradients(model);
    detail::cnn_backward(model, seq, target, state, grads);
    TextCnnModel probe = model;
    auto fd = [&probe, &seq, target, eps](double* slot) {
        const double saved = *slot;
        *slot = saved + eps;
        double up = detail::bce_from_logit(
            detail::cnn_forward_state(probe, seq).logit, target);
        *slot = saved - eps;
        double down = detail::bce_from_logit(
            detail::cnn_forward_state(probe, seq).logit, target);
        *slot = saved;
        return (up - down) / (2 * eps);
    };
    double max_err = 0.0;
    for (std::size_t wi = 0; wi < model.widths.size(); ++wi) {
        for (std::size_t i = 0; i < model.conv_w[wi].size(); ++i) {
            max_err = std::max(max_err, detail::gradient_rel_error(
                                            grads.conv_w[wi][i], fd(&probe.conv_w[wi][i])));
        }
        for (std::size_t f = 0; f < model.conv_b[wi].size(); ++f) {
            max_err = std::max(max_err, detail::gradient_rel_error(
                                            grads.conv_b[wi][f], fd(&probe.conv_b[wi][f])));
        }
    }
    for (std::size_t i = 0; i < model.dense_w.size(); ++i) {
        max_err = std::max(max_err,
                           detail::gradient_rel_error(grads.dense_w[i], fd(&probe.dense_w[i])));
    }
    max_err = std::max(max_err,
                       detail::gradient_rel_error(grads.dense_b, fd(&probe.dense_b)));
    return max_err;
}

// --- end-to-end query classification ------------------------------------------

enum class ModelKind { Logistic, Cnn };

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "logistic") return ModelKind::Logistic;
    if (s == "cnn") return ModelKind::Cnn;
    throw std::invalid_argument("unknown model kind: " + s +
                                " (expected logistic or cnn)");
}

inline std::string model_kind_name(ModelKind kind) {
    return kind == ModelKind::Logistic ? "logistic" : "cnn";
}

struct Prediction {
    int label = 0;
    double probability = 0.5;
};

struct ClassifierPipeline {
    ModelKind kind = ModelKind::Cnn;
    LogisticModel logistic;
    TextCnnModel cnn;
    double threshold = 0.5;
};

// tokenize -> stopword removal -> featurize -> probability; label = 1 iff
// probability >= threshold. All-OOV queries flow through the zero-vector
// path and never error.
inline Prediction classify_query(const ClassifierPipeline& pipeline,
                                 const EmbeddingTable& table,
                                 const std::set<std::string>& stopwords,
                                 std::string_view raw_query) {
    TokenizedQuery tokens = remove_stopwords(tokenize(raw_query), stopwords);
    Prediction pred;
    if (pipeline.kind == ModelKind::Logistic) {
        pred.probability =
            predict_logistic(pipeline.logistic, query_embedding(tokens, table));
    } else {
        pred.probability = cnn_forward(
            pipeline.cnn, sequence_embedding(tokens, table, pipeline.cnn.max_len));
    }
    pred.label = pred.probability >= pipeline.threshold ? 1 : 0;
    return pred;
}

// --- checkpoints ----------------------------------------------------------------

// Self-describing JSON checkpoint: kind, shapes, hyperparameters, seed and
// all parameters in decimal. Loading reproduces predictions exactly.
inline nlohmann::ordered_json checkpoint_to_json(const ClassifierPipeline& pipeline,
                                                 const TrainConfig& config) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["kind"] = model_kind_name(pipeline.kind);
    j["seed"] = config.seed;
    j["hyperparameters"] = {{"epochs", config.epochs},
                            {"batch_size", config.batch_size},
                            {"learning_rate", config.learning_rate},
                            {"l2", config.l2},
                            {"label_mode",
                             config.label_mode == LabelMode::Hard ? "hard" : "soft"},
                            {"validation_fraction", config.validation_fraction}};
    j["threshold"] = pipeline.threshold;
    if (pipeline.kind == ModelKind::Logistic) {
        j["dim"] = pipeline.logistic.weights.size();
        j["l2"] = pipeline.logistic.l2;
        j["weights"] = pipeline.logistic.weights;
        j["bias"] = pipeline.logistic.bias;
    } else {
        j["max_len"] = pipeline.cnn.max_len;
        j["dim"] = pipeline.cnn.dim;
        j["widths"] = pipeline.cnn.widths;
        j["filters_per_width"] = pipeline.cnn.filters_per_width;
        j["conv_w"] = pipeline.cnn.conv_w;
        j["conv_b"] = pipeline.cnn.conv_b;
        j["dense_w"] = pipeline.cnn.dense_w;
        j["dense_b"] = pipeline.cnn.dense_b;
    }
    return j;
}

inline void save_checkpoint(const std::string& path,
                            const ClassifierPipeline& pipeline,
                            const TrainConfig& config) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << checkpoint_to_json(pipeline, config).dump(2) << '\n';
}

inline ClassifierPipeline load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    ClassifierPipeline pipeline;
    pipeline.kind = parse_model_kind(j.at("kind").get<std::string>());
    pipeline.threshold = j.at("threshold").get<double>();
    if (pipeline.kind == ModelKind::Logistic) {
        pipeline.logistic.weights = j.at("weights").get<std::vector<double>>();
        pipeline.logistic.bias = j.at("bias").get<double>();
        pipeline.logistic.l2 = j.at("l2").get<double>();
    } else {
        pipeline.cnn.max_len = j.at("max_len").get<int>();
        pipeline.cnn.dim = j.at("dim").get<int>();
        pipeline.cnn.widths = j.at("widths").get<std::vector<int>>();
        pipeline.cnn.filters_per_width = j.at("filters_per_width").get<int>();
        pipeline.cnn.conv_w = j.at("conv_w").get<std::vector<std::vector<double>>>();
        pipeline.cnn.conv_b = j.at("conv_b").get<std::vector<std::vector<double>>>();
        pipeline.cnn.dense_w = j.at("dense_w").get<std::vector<double>>();
        pipeline.cnn.dense_b = j.at("dense_b").get<double>();
        pipeline.cnn.validate_shape();
    }
    return pipeline;
}

}  // namespace codeintent
