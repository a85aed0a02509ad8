#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "codeintent/eval.hpp"
#include "codeintent/random.hpp"

using namespace codeintent;

TEST_CASE("confusion counts the four cells", "[eval]") {
    auto c = confusion({1, 0, 1}, {1, 1, 0});
    CHECK(c.tp == 1);
    CHECK(c.fn == 1);
    CHECK(c.fp == 1);
    CHECK(c.tn == 0);

    auto diag = confusion({1, 0, 1, 0}, {1, 0, 1, 0});
    CHECK(diag.fp == 0);
    CHECK(diag.fn == 0);

    auto empty = confusion({}, {});
    CHECK(empty.total() == 0);

    CHECK_THROWS_AS(confusion({1}, {1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(confusion({2}, {0}), std::invalid_argument);
}

TEST_CASE("metrics reproduce the worked confusion example", "[eval]") {
    ConfusionCounts c{3, 1, 2, 4};
    EvalReport r = metrics(c);
    CHECK(r.accuracy == 0.7);
    CHECK(r.code_intent.precision == 0.75);
    CHECK(r.code_intent.recall == 0.6);
    CHECK_THAT(r.code_intent.f1, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    CHECK_THAT(r.not_code_intent.precision,
               Catch::Matchers::WithinAbs(4.0 / 6.0, 1e-12));
    CHECK(r.not_code_intent.recall == 0.8);
    CHECK(r.prevalence == 0.5);
    CHECK(r.n == 10);
}

TEST_CASE("metrics define 0/0 ratios as 0 and flag them", "[eval]") {
    ConfusionCounts no_positives{0, 0, 0, 5};
    EvalReport r = metrics(no_positives);
    CHECK(r.code_intent.precision == 0.0);
    CHECK(r.code_intent.recall == 0.0);
    CHECK(r.code_intent.f1 == 0.0);
    CHECK_FALSE(r.flags.empty());

    ConfusionCounts perfect{4, 0, 0, 6};
    EvalReport p = metrics(perfect);
    CHECK(p.accuracy == 1.0);
    CHECK(p.code_intent.f1 == 1.0);
    CHECK(p.not_code_intent.f1 == 1.0);
    CHECK(p.flags.empty());

    CHECK_THROWS_AS(metrics(ConfusionCounts{}), std::invalid_argument);
}

TEST_CASE("class-0 metrics equal class-1 metrics on complemented labels", "[eval]") {
    Rng rng(19);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<int> preds;
        std::vector<int> golds;
        std::vector<int> preds_c;
        std::vector<int> golds_c;
        for (int i = 0; i < 25; ++i) {
            int p = rng.bernoulli(0.5);
            int g = rng.bernoulli(0.4);
            preds.push_back(p);
            golds.push_back(g);
            preds_c.push_back(1 - p);
            golds_c.push_back(1 - g);
        }
        EvalReport direct = metrics(confusion(preds, golds));
        EvalReport flipped = metrics(confusion(preds_c, golds_c));
        CHECK(direct.not_code_intent.precision == flipped.code_intent.precision);
        CHECK(direct.not_code_intent.recall == flipped.code_intent.recall);
        CHECK(direct.not_code_intent.f1 == flipped.code_intent.f1);
        CHECK(direct.accuracy == flipped.accuracy);
    }
}

TEST_CASE("identical predictions yield perfect metrics", "[eval]") {
    std::vector<int> labels = {1, 0, 1, 1, 0};
    EvalReport r = metrics(confusion(labels, labels));
    CHECK(r.accuracy == 1.0);
    CHECK(r.code_intent.f1 == 1.0);
    CHECK(r.not_code_intent.f1 == 1.0);
}

TEST_CASE("fleiss_kappa reproduces hand computations", "[eval]") {
    RatingsTable perfect;
    perfect.n_raters = 3;
    perfect.counts = {{3, 0}, {0, 3}, {3, 0}};
    CHECK_THAT(fleiss_kappa(perfect), Catch::Matchers::WithinAbs(1.0, 1e-12));

    // P_1 = 1/3, P_2 = 1, Pbar = 2/3, PbarE = 5/9 -> kappa = 1/4
    RatingsTable derived;
    derived.n_raters = 3;
    derived.counts = {{2, 1}, {0, 3}};
    CHECK_THAT(fleiss_kappa(derived), Catch::Matchers::WithinAbs(0.25, 1e-9));
}

TEST_CASE("fleiss_kappa is invariant to item and category permutations", "[eval]") {
    RatingsTable table;
    table.n_raters = 4;
    table.counts = {{3, 1}, {1, 3}, {2, 2}, {4, 0}};
    double base = fleiss_kappa(table);

    RatingsTable items_permuted;
    items_permuted.n_raters = 4;
    items_permuted.counts = {{4, 0}, {1, 3}, {3, 1}, {2, 2}};
    CHECK_THAT(fleiss_kappa(items_permuted), Catch::Matchers::WithinAbs(base, 1e-12));

    RatingsTable categories_permuted;
    categories_permuted.n_raters = 4;
    categories_permuted.counts = {{1, 3}, {3, 1}, {2, 2}, {0, 4}};
    CHECK_THAT(fleiss_kappa(categories_permuted),
               Catch::Matchers::WithinAbs(base, 1e-12));
}

TEST_CASE("fleiss_kappa rejects degenerate tables", "[eval]") {
    RatingsTable one_category;
    one_category.n_raters = 3;
    one_category.counts = {{3, 0}, {3, 0}};
    CHECK_THROWS_AS(fleiss_kappa(one_category), std::runtime_error);

    RatingsTable bad_row;
    bad_row.n_raters = 3;
    bad_row.counts = {{2, 2}};
    CHECK_THROWS_AS(fleiss_kappa(bad_row), std::invalid_argument);

    CHECK_THROWS_AS(fleiss_kappa(RatingsTable{}), std::invalid_argument);
}

TEST_CASE("majority_gold takes the annotator majority", "[eval]") {
    CHECK(majority_gold({1, 1, 0}) == 1);
    CHECK(majority_gold({0, 0, 0}) == 0);
    CHECK_THROWS_AS(majority_gold({1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(majority_gold({1, 2, 0}), std::invalid_argument);
}

TEST_CASE("evaluate_model composes confusion and metrics over ids", "[eval]") {
    std::vector<std::pair<long long, int>> preds = {{1, 1}, {2, 1}, {3, 1}};
    std::vector<std::pair<long long, int>> golds = {{1, 1}, {2, 1}, {3, 1}};
    EvalReport r = evaluate_model(preds, golds);
    CHECK(r.accuracy == 1.0);
    CHECK(r.prevalence == 1.0);

    CHECK_THROWS_AS(evaluate_model({}, {}), std::invalid_argument);
    std::vector<std::pair<long long, int>> wrong_ids = {{9, 1}, {2, 1}, {3, 1}};
    CHECK_THROWS_AS(evaluate_model(wrong_ids, golds), std::invalid_argument);
}

TEST_CASE("gold files load in both column formats", "[eval]") {
    {
        std::ofstream out("test_gold_single.tsv");
        out << "1\thow to sort in java\t1\n";
        out << "2\tjava jobs\t0\n";
    }
    auto single = load_gold_file("test_gold_single.tsv");
    REQUIRE(single.size() == 2);
    CHECK(single[0].gold == 1);
    CHECK(single[1].query == "java jobs");
    CHECK(single[0].annotator_labels.empty());

    {
        std::ofstream out("test_gold_raters.tsv");
        out << "1\thow to sort in java\t1\t1\t0\n";
        out << "2\tjava jobs\t0\t0\t0\n";
    }
    auto rated = load_gold_file("test_gold_raters.tsv");
    REQUIRE(rated.size() == 2);
    CHECK(rated[0].gold == 1);
    CHECK(rated[0].annotator_labels == std::vector<int>{1, 1, 0});
    auto ratings = ratings_from_gold(rated);
    CHECK(ratings.n_raters == 3);
    REQUIRE(ratings.counts.size() == 2);
    CHECK(ratings.counts[0] == std::vector<long long>{1, 2});
    CHECK(ratings.counts[1] == std::vector<long long>{3, 0});

    {
        std::ofstream out("test_gold_bad.tsv");
        out << "1\tjava\t7\n";
    }
    CHECK_THROWS_AS(load_gold_file("test_gold_bad.tsv"), std::runtime_error);
    std::remove("test_gold_single.tsv");
    std::remove("test_gold_raters.tsv");
    std::remove("test_gold_bad.tsv");
}

TEST_CASE("report rendering emits the tabular layout", "[eval]") {
    EvalReport r = metrics(ConfusionCounts{3, 1, 2, 4});
    std::string table = render_report_table({{"majority_vote", r}, {"cnn", r}});
    CHECK(table.find("Model") != std::string::npos);
    CHECK(table.find("Accuracy") != std::string::npos);
    CHECK(table.find("majority_vote") != std::string::npos);
    CHECK(table.find("cnn") != std::string::npos);
    CHECK(table.find("0.700") != std::string::npos);

    auto j = report_to_json(r);
    CHECK(j.at("accuracy").get<double>() == 0.7);
    CHECK(j.at("code_intent").at("precision").get<double>() == 0.75);
}
