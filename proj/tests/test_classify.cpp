#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "codeintent/classify.hpp"
#include "codeintent/random.hpp"

using namespace codeintent;

namespace {

std::vector<double> random_vector(Rng& rng, int d, double scale = 1.0) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

TextCnnModel random_cnn(Rng& rng, int max_len, int dim, std::vector<int> widths,
                        int filters) {
    return init_cnn(max_len, dim, std::move(widths), filters, rng);
}

double sigmoid_ref(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("predict_logistic evaluates sigmoid(w.x + b)", "[classify]") {
    LogisticModel model;
    model.weights = {0.0, 0.0};
    CHECK(predict_logistic(model, std::vector<double>{5.0, -3.0}) == 0.5);
    model.weights = {1.0, 0.0};
    CHECK(predict_logistic(model, std::vector<double>{0.0, 5.0}) == 0.5);
    CHECK_THAT(predict_logistic(model, std::vector<double>{std::log(3.0), 0.0}),
               Catch::Matchers::WithinAbs(0.75, 1e-12));
    CHECK_THROWS_AS(predict_logistic(model, std::vector<double>{1.0}),
                    std::invalid_argument);
}

TEST_CASE("predicted probabilities stay strictly inside (0,1)", "[classify]") {
    LogisticModel model;
    model.weights = {100.0};
    double hi = predict_logistic(model, std::vector<double>{10.0});
    double lo = predict_logistic(model, std::vector<double>{-10.0});
    CHECK(hi < 1.0);
    CHECK(hi > 0.0);
    CHECK(lo > 0.0);
    CHECK(lo < 1.0);
}

TEST_CASE("train_logistic separates two point clouds", "[classify]") {
    Rng rng(3);
    std::vector<std::vector<double>> x;
    std::vector<double> t;
    for (int i = 0; i < 40; ++i) {
        double cx = i % 2 == 0 ? 2.0 : -2.0;
        x.push_back({cx + rng.uniform(-0.5, 0.5), cx + rng.uniform(-0.5, 0.5)});
        t.push_back(i % 2 == 0 ? 1.0 : 0.0);
    }
    TrainConfig cfg;  // library defaults: 20 epochs, batch 32, lr 0.05
    cfg.seed = 5;
    LogisticModel model = train_logistic(x, t, cfg);
    for (std::size_t i = 0; i < x.size(); ++i) {
        double p = predict_logistic(model, x[i]);
        CHECK((p >= 0.5 ? 1.0 : 0.0) == t[i]);
    }
}

TEST_CASE("uninformative 0.5 targets keep the weights near zero", "[classify]") {
    Rng rng(9);
    std::vector<std::vector<double>> x;
    std::vector<double> t(30, 0.5);
    for (int i = 0; i < 30; ++i) x.push_back(random_vector(rng, 4));
    TrainConfig cfg;
    cfg.seed = 2;
    LogisticModel model = train_logistic(x, t, cfg);
    double norm = 0.0;
    for (double w : model.weights) norm += w * w;
    CHECK(std::sqrt(norm) < 0.05);
    for (const auto& xi : x) {
        CHECK_THAT(predict_logistic(model, xi),
                   Catch::Matchers::WithinAbs(0.5, 0.05));
    }
}

TEST_CASE("train_logistic validates inputs and is seed-deterministic", "[classify]") {
    TrainConfig cfg;
    CHECK_THROWS_AS(train_logistic({}, {}, cfg), std::invalid_argument);
    Rng rng(4);
    std::vector<std::vector<double>> x;
    std::vector<double> t;
    for (int i = 0; i < 50; ++i) {
        x.push_back(random_vector(rng, 3));
        t.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    }
    cfg.seed = 77;
    auto a = train_logistic(x, t, cfg);
    auto b = train_logistic(x, t, cfg);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
}

TEST_CASE("logistic gradient matches finite differences", "[classify]") {
    Rng rng(21);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        int d = 2 + static_cast<int>(rng.index(6));
        LogisticModel model;
        model.weights = random_vector(rng, d);
        model.bias = rng.uniform(-1.0, 1.0);
        model.l2 = 1e-3;
        auto x = random_vector(rng, d, 2.0);
        double target = rng.uniform();
        worst = std::max(worst, gradient_check_logistic(model, x, target, 1e-6));
    }
    INFO("max relative error " << worst);
    CHECK(worst < 1e-4);
}

TEST_CASE("logistic gradient check passes at the stationary zero point",
          "[classify]") {
    LogisticModel model;
    model.weights = {0.0, 0.0, 0.0};
    model.bias = 0.0;
    model.l2 = 1e-4;
    CHECK(gradient_check_logistic(model, {0.4, -0.2, 1.0}, 0.5, 1e-6) < 1e-4);
}

TEST_CASE("cnn_forward on zero parameters returns 0.5", "[classify]") {
    TextCnnModel model;
    model.max_len = 4;
    model.dim = 3;
    model.widths = {2};
    model.filters_per_width = 2;
    model.conv_w = {std::vector<double>(2 * 2 * 3, 0.0)};
    model.conv_b = {std::vector<double>(2, 0.0)};
    model.dense_w.assign(2, 0.0);
    std::vector<double> seq(4 * 3, 1.0);
    CHECK(cnn_forward(model, seq) == 0.5);
}

TEST_CASE("cnn_forward matches a hand-computed pass", "[classify]") {
    // one width-1 filter reading feature 0, dense weight 1, all biases 0
    TextCnnModel model;
    model.max_len = 3;
    model.dim = 2;
    model.widths = {1};
    model.filters_per_width = 1;
    model.conv_w = {{1.0, 0.0}};
    model.conv_b = {{0.0}};
    model.dense_w = {1.0};
    model.dense_b = 0.0;
    std::vector<double> seq = {-1.0, 9.0, 2.0, 9.0, 0.5, 9.0};
    // activations relu(-1)=0, relu(2)=2, relu(0.5)=0.5 -> maxpool 2 -> sigmoid(2)
    CHECK_THAT(cnn_forward(model, seq),
               Catch::Matchers::WithinAbs(sigmoid_ref(2.0), 1e-12));
    std::vector<double> negative = {-1.0, 9.0, -2.0, 9.0, -0.5, 9.0};
    CHECK(cnn_forward(model, negative) == 0.5);  // ReLU clamps, sigmoid(0)
}

TEST_CASE("cnn rejects sequences shorter than the largest filter", "[classify]") {
    Rng rng(33);
    CHECK_THROWS_AS(random_cnn(rng, 2, 4, {2, 3}, 2), std::invalid_argument);
    auto model = random_cnn(rng, 3, 4, {2, 3}, 2);
    CHECK_THROWS_AS(cnn_forward(model, std::vector<double>(5, 0.0)),
                    std::invalid_argument);
}

TEST_CASE("cnn backprop matches finite differences", "[classify]") {
    Rng rng(55);
    double worst = 0.0;
    int accepted = 0;
    while (accepted < 20) {
        auto model = random_cnn(rng, 3, 4, {2, 3}, 2);
        auto seq = random_vector(rng, 3 * 4, 1.2);
        if (cnn_pool_degenerate(model, seq)) continue;
        double target = rng.uniform();
        worst = std::max(worst, gradient_check_cnn(model, seq, target, 1e-6));
        ++accepted;
    }
    INFO("max relative error " << worst);
    CHECK(worst < 1e-4);
}

TEST_CASE("BCE with {0,1} targets equals the hard-label loss", "[classify]") {
    Rng rng(66);
    for (int trial = 0; trial < 100; ++trial) {
        double z = rng.uniform(-4.0, 4.0);
        double p = sigmoid_ref(z);
        CHECK_THAT(detail::bce_from_logit(z, 1.0),
                   Catch::Matchers::WithinAbs(-std::log(p), 1e-12));
        CHECK_THAT(detail::bce_from_logit(z, 0.0),
                   Catch::Matchers::WithinAbs(-std::log(1.0 - p), 1e-12));
    }
}

TEST_CASE("train_cnn memorizes a keyword-disjoint toy set", "[classify]") {
    // two classes with disjoint token vectors
    Rng rng(8);
    const int max_len = 4;
    const int dim = 6;
    std::vector<std::vector<double>> seqs;
    std::vector<double> targets;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> seq(max_len * dim, 0.0);
        int cls = i % 2;
        for (int row = 0; row < 3; ++row) {
            // class tokens live in disjoint halves of the feature space
            int base = row * dim + (cls == 1 ? 0 : 3);
            seq[base] = 1.0 + 0.1 * static_cast<double>(rng.index(5));
            seq[base + 1] = 0.5;
        }
        seqs.push_back(std::move(seq));
        targets.push_back(cls);
    }
    TrainConfig cfg;  // default 20 epochs
    cfg.batch_size = 4;
    cfg.learning_rate = 0.25;
    cfg.seed = 13;
    TextCnnModel model = train_cnn(seqs, targets, max_len, dim, {2}, 4, cfg);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        double p = cnn_forward(model, seqs[i]);
        CHECK((p >= 0.5 ? 1.0 : 0.0) == targets[i]);
    }
}

TEST_CASE("train_cnn is seed-deterministic and validates shapes", "[classify]") {
    Rng rng(77);
    std::vector<std::vector<double>> seqs;
    std::vector<double> targets;
    for (int i = 0; i < 12; ++i) {
        seqs.push_back(random_vector(rng, 3 * 4));
        targets.push_back(rng.uniform());
    }
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 21;
    auto a = train_cnn(seqs, targets, 3, 4, {2}, 2, cfg);
    auto b = train_cnn(seqs, targets, 3, 4, {2}, 2, cfg);
    CHECK(a.conv_w == b.conv_w);
    CHECK(a.dense_w == b.dense_w);
    CHECK(a.dense_b == b.dense_b);
    CHECK_THROWS_AS(train_cnn({}, {}, 3, 4, {2}, 2, cfg), std::invalid_argument);
    CHECK_THROWS_AS(train_cnn({{1.0, 2.0}}, {0.5}, 3, 4, {2}, 2, cfg),
                    std::invalid_argument);
}

TEST_CASE("padding never wins the max-pool when real activations are positive",
          "[classify]") {
    Rng rng(91);
    const int max_len = 6;
    const int dim = 3;
    const int n_real = 2;
    for (int trial = 0; trial < 20; ++trial) {
        auto model = random_cnn(rng, max_len, dim, {2}, 3);
        for (auto& b : model.conv_b[0]) b = 0.0;  // padding windows score 0
        std::vector<double> seq(max_len * dim, 0.0);
        for (int i = 0; i < n_real * dim; ++i) seq[i] = rng.uniform(0.2, 1.5);
        auto state = detail::cnn_forward_state(model, seq);
        for (std::size_t k = 0; k < state.pooled.size(); ++k) {
            if (state.pooled[k] > 0.0) {
                // the winning window must overlap a real token row
                CHECK(state.best_pos[k] < n_real);
            }
        }
        // identical output when the (all-zero) padding rows are "permuted"
        CHECK(cnn_forward(model, seq) == state.prob);
    }
}

TEST_CASE("training loss is non-increasing at a stable learning rate",
          "[classify]") {
    Rng rng(44);
    std::vector<std::vector<double>> x;
    std::vector<double> t;
    for (int i = 0; i < 60; ++i) {
        auto xi = random_vector(rng, 3);
        t.push_back(xi[0] + 0.3 * xi[1] > 0 ? 1.0 : 0.0);
        x.push_back(std::move(xi));
    }
    auto full_loss = [&x, &t](const LogisticModel& m) {
        double loss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double z = m.bias;
            for (std::size_t j = 0; j < x[i].size(); ++j) z += m.weights[j] * x[i][j];
            loss += detail::bce_from_logit(z, t[i]);
        }
        return loss / static_cast<double>(x.size());
    };
    TrainConfig cfg;
    cfg.batch_size = static_cast<int>(x.size());  // full-batch descent
    cfg.learning_rate = 0.1;
    cfg.l2 = 0.0;
    double prev = full_loss(LogisticModel{std::vector<double>(3, 0.0), 0.0, 0.0});
    for (int epochs = 1; epochs <= 8; ++epochs) {
        cfg.epochs = epochs;
        double now = full_loss(train_logistic(x, t, cfg));
        CHECK(now <= prev + 1e-12);
        prev = now;
    }
}

TEST_CASE("cnn full-batch training loss is non-increasing", "[classify]") {
    Rng rng(52);
    const int max_len = 4;
    const int dim = 3;
    std::vector<std::vector<double>> seqs;
    std::vector<double> targets;
    for (int i = 0; i < 24; ++i) {
        seqs.push_back(random_vector(rng, max_len * dim));
        targets.push_back(seqs.back()[0] > 0 ? 1.0 : 0.0);
    }
    auto full_loss = [&seqs, &targets](const TextCnnModel& m) {
        double loss = 0.0;
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            auto state = detail::cnn_forward_state(m, seqs[i]);
            loss += detail::bce_from_logit(state.logit, targets[i]);
        }
        return loss / static_cast<double>(seqs.size());
    };
    TrainConfig cfg;
    cfg.batch_size = static_cast<int>(seqs.size());
    cfg.learning_rate = 0.02;
    cfg.seed = 3;
    double prev = std::numeric_limits<double>::infinity();
    for (int epochs = 1; epochs <= 8; ++epochs) {
        cfg.epochs = epochs;
        double now = full_loss(train_cnn(seqs, targets, max_len, dim, {2}, 3, cfg));
        CHECK(now <= prev + 1e-12);
        prev = now;
    }
}

TEST_CASE("classify_query applies the documented threshold rule", "[classify]") {
    EmbeddingTable table;
    table.dim = 2;
    table.vocab.tokens = {"java"};
    table.vocab.counts = {1};
    table.vocab.index = {{"java", 0}};
    table.input = {1.0, -1.0};

    ClassifierPipeline pipeline;
    pipeline.kind = ModelKind::Logistic;
    pipeline.logistic.weights = {0.0, 0.0};
    pipeline.threshold = 0.5;
    auto pred = classify_query(pipeline, table, default_stopwords(), "");
    CHECK(pred.probability == 0.5);
    CHECK(pred.label == 1);  // >= threshold at the boundary

    pipeline.logistic.weights = {2.0, 0.0};
    pred = classify_query(pipeline, table, default_stopwords(), "java sort");
    CHECK(pred.probability > 0.5);
    CHECK(pred.label == 1);

    pipeline.logistic.weights = {-2.0, 0.0};
    pred = classify_query(pipeline, table, default_stopwords(), "java sort");
    CHECK(pred.label == 0);
}

TEST_CASE("checkpoints round-trip predictions exactly", "[classify]") {
    Rng rng(17);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 6;

    ClassifierPipeline logistic;
    logistic.kind = ModelKind::Logistic;
    logistic.logistic.weights = random_vector(rng, 5);
    logistic.logistic.bias = 0.37;
    logistic.threshold = 0.6;
    save_checkpoint("test_ckpt_lr.json", logistic, cfg);
    auto loaded_lr = load_checkpoint("test_ckpt_lr.json");
    CHECK(loaded_lr.threshold == 0.6);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = random_vector(rng, 5, 2.0);
        CHECK(predict_logistic(loaded_lr.logistic, x) ==
              predict_logistic(logistic.logistic, x));
    }

    ClassifierPipeline cnn;
    cnn.kind = ModelKind::Cnn;
    cnn.cnn = random_cnn(rng, 4, 3, {2, 3}, 2);
    save_checkpoint("test_ckpt_cnn.json", cnn, cfg);
    auto loaded_cnn = load_checkpoint("test_ckpt_cnn.json");
    for (int trial = 0; trial < 20; ++trial) {
        auto seq = random_vector(rng, 4 * 3, 1.5);
        CHECK(cnn_forward(loaded_cnn.cnn, seq) == cnn_forward(cnn.cnn, seq));
    }
    std::remove("test_ckpt_lr.json");
    std::remove("test_ckpt_cnn.json");
}
