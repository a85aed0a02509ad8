#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "codeintent/pipeline.hpp"

using namespace codeintent;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / ("codeintent_test_" + name);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& leaf) const {
        return (path / leaf).string();
    }
};

// small, fast configuration for end-to-end stage tests
PipelineConfig mini_config(const TempDir& dir) {
    PipelineConfig cfg;
    cfg.output_dir = dir / "out";
    cfg.log_file = dir / "logs.jsonl";
    cfg.truth_file = dir / "truth.tsv";
    cfg.language = Language::Java;
    cfg.k = 2;
    cfg.seed = 31;
    cfg.synth_size = 2000;
    cfg.embedding.dim = 24;
    cfg.embedding.epochs = 5;
    cfg.embedding.min_count = 2;
    cfg.max_len = 10;
    cfg.cnn_widths = {2, 3};
    cfg.filters_per_width = 8;
    cfg.train_epochs = 25;
    cfg.batch_size = 8;
    cfg.lr_cnn = 0.08;
    return cfg;
}

void run_all_stages(const PipelineConfig& cfg) {
    for (const std::string stage :
         {"synth", "ingest", "label", "fit-labelmodel", "train-embeddings",
          "train-classifier", "evaluate", "export-dataset"}) {
        run_stage(stage, cfg);
    }
}

ClassifierPipeline always_positive_classifier(int dim) {
    ClassifierPipeline p;
    p.kind = ModelKind::Logistic;
    p.logistic.weights.assign(dim, 0.0);
    p.logistic.bias = 2.2;  // sigmoid(2.2) ~ 0.9
    return p;
}

EmbeddingTable trivial_table(int dim) {
    EmbeddingTable t;
    t.dim = dim;
    t.vocab.tokens = {"java"};
    t.vocab.counts = {1};
    t.vocab.index = {{"java", 0}};
    t.input.assign(dim, 0.25);
    return t;
}

Corpus one_record_corpus() {
    Corpus c;
    c.language = Language::Java;
    QueryRecord r;
    r.id = 1;
    r.text = "how to do quicksort in java";
    r.frequency = 3;
    r.distinct_users = 1;
    r.top_clicked_urls = {"u1"};
    r.language = Language::Java;
    c.records.push_back(std::move(r));
    return c;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic and sized", "[pipeline]") {
    SyntheticConfig cfg;
    cfg.size = 500;
    cfg.seed = 1;
    auto a = generate_synthetic_corpus(cfg);
    auto b = generate_synthetic_corpus(cfg);
    CHECK(a.entries.size() == 500);
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].query == b.entries[i].query);
        CHECK(a.entries[i].user_id == b.entries[i].user_id);
        CHECK(a.entries[i].clicked_urls == b.entries[i].clicked_urls);
    }
    REQUIRE(a.truth.size() == b.truth.size());
    for (std::size_t i = 0; i < a.truth.size(); ++i) {
        CHECK(a.truth[i].text == b.truth[i].text);
        CHECK(a.truth[i].intent == b.truth[i].intent);
    }
}

TEST_CASE("restricting the generator to the code bank fixes ground truth",
          "[pipeline]") {
    SyntheticConfig cfg;
    cfg.size = 200;
    cfg.banks = {"code_search"};
    auto corpus = generate_synthetic_corpus(cfg);
    for (const auto& q : corpus.truth) CHECK(q.intent == 1);
    cfg.banks = {"nonexistent"};
    CHECK_THROWS_AS(generate_synthetic_corpus(cfg), std::invalid_argument);
}

TEST_CASE("stages fail with the name of the missing upstream stage", "[pipeline]") {
    TempDir dir("missing_upstream");
    PipelineConfig cfg = mini_config(dir);
    try {
        run_stage("fit-labelmodel", cfg);
        FAIL("expected a missing-artifact error");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("'label'") != std::string::npos);
    }
    try {
        run_stage("evaluate", cfg);
        FAIL("expected a missing-artifact error");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("'ingest'") != std::string::npos);
    }
    CHECK_THROWS_AS(run_stage("never-heard-of-it", cfg), std::invalid_argument);
}

TEST_CASE("export_dataset writes the documented row shape", "[pipeline]") {
    auto rows = export_dataset(one_record_corpus(), default_keyword_sets(),
                               always_positive_classifier(4), trivial_table(4),
                               default_stopwords(), 1);
    REQUIRE(rows.size() == 1);
    std::ostringstream out;
    write_dataset(out, rows);
    CHECK(out.str() ==
          "Id\tQuery\tIsCodeSearchQuery\tTopClickedUrls\tPopularityRank\n"
          "1\thow to do quicksort in java\ttrue\tu1\t1\n");
}

TEST_CASE("export_dataset applies the anonymity filter", "[pipeline]") {
    Corpus corpus = one_record_corpus();  // distinct_users = 1
    auto rows = export_dataset(corpus, default_keyword_sets(),
                               always_positive_classifier(4), trivial_table(4),
                               default_stopwords(), 3);
    CHECK(rows.empty());
    std::ostringstream out;
    write_dataset(out, rows);
    CHECK(out.str() ==
          "Id\tQuery\tIsCodeSearchQuery\tTopClickedUrls\tPopularityRank\n");
}

TEST_CASE("export_dataset requires a trained classifier", "[pipeline]") {
    ClassifierPipeline untrained;
    untrained.kind = ModelKind::Logistic;
    CHECK_THROWS_AS(export_dataset(one_record_corpus(), default_keyword_sets(),
                                   untrained, trivial_table(4),
                                   default_stopwords(), 1),
                    std::runtime_error);
}

TEST_CASE("dataset files round-trip byte-identically", "[pipeline]") {
    Corpus corpus;
    corpus.language = Language::Java;
    for (int i = 0; i < 12; ++i) {
        QueryRecord r;
        r.id = i + 1;
        r.text = "java query number " + std::to_string(i);
        r.frequency = 20 - i;
        r.distinct_users = 5;
        r.top_clicked_urls = {"https://a.example/x,y", "https://b.example/%z"};
        r.language = Language::Java;
        corpus.records.push_back(std::move(r));
    }
    auto rows = export_dataset(corpus, default_keyword_sets(),
                               always_positive_classifier(3), trivial_table(3),
                               default_stopwords(), 2);
    REQUIRE(rows.size() == 12);
    std::ostringstream first;
    write_dataset(first, rows);
    std::istringstream parse_in(first.str());
    auto parsed = parse_dataset(parse_in);
    std::ostringstream second;
    write_dataset(second, parsed);
    CHECK(first.str() == second.str());
    // URLs decode back to their original unescaped form
    CHECK(parsed[0].top_clicked_urls ==
          std::vector<std::string>{"https://a.example/x,y", "https://b.example/%z"});
    // ranks dense and unique from 1
    std::set<long long> ranks;
    for (const auto& row : parsed) ranks.insert(row.popularity_rank);
    CHECK(ranks.size() == parsed.size());
    CHECK(*ranks.begin() == 1);
    CHECK(*ranks.rbegin() == static_cast<long long>(parsed.size()));
}

TEST_CASE("pipeline config parses overrides and defaults", "[pipeline]") {
    auto cfg = parse_pipeline_config(nlohmann::json::parse(R"({
        "output_dir": "somewhere",
        "language": "csharp",
        "k": 7,
        "model": "logistic",
        "label_mode": "hard",
        "embedding": {"dim": 24},
        "classifier": {"epochs": 3}
    })"));
    CHECK(cfg.output_dir == "somewhere");
    CHECK(cfg.language == Language::CSharp);
    CHECK(cfg.k == 7);
    CHECK(cfg.model == ModelKind::Logistic);
    CHECK(cfg.label_mode == LabelMode::Hard);
    CHECK(cfg.embedding.dim == 24);
    CHECK(cfg.embedding.window == 3);  // untouched default
    CHECK(cfg.train_epochs == 3);
    CHECK(cfg.batch_size == 32);
}

TEST_CASE("full mini pipeline produces every artifact", "[pipeline]") {
    TempDir dir("full_mini");
    PipelineConfig cfg = mini_config(dir);
    run_all_stages(cfg);
    for (const auto& path :
         {artifact::corpus(cfg), artifact::matrix(cfg), artifact::label_model(cfg),
          artifact::training_labels(cfg), artifact::embeddings(cfg),
          artifact::checkpoint(cfg), artifact::split(cfg),
          artifact::report_text(cfg), artifact::report_json(cfg),
          artifact::dataset(cfg)}) {
        INFO(path);
        CHECK(fs::exists(path));
    }
    // manifests accompany every stage
    for (const std::string stage :
         {"synth", "ingest", "label", "fit-labelmodel", "train-embeddings",
          "train-classifier", "evaluate", "export-dataset"}) {
        CHECK(fs::exists(cfg.output_dir + "/manifest_" + stage + ".json"));
    }
    auto report = nlohmann::json::parse(std::ifstream(artifact::report_json(cfg)));
    CHECK(report.at("systems").contains("majority_vote"));
    CHECK(report.at("systems").contains("generative"));
    CHECK(report.at("systems").contains("cnn"));
    CHECK(report.at("n").get<int>() > 0);

    // exported rows honor the k threshold against the corpus user counts
    Corpus corpus = load_corpus(artifact::corpus(cfg));
    std::map<std::string, long long> users_by_text;
    for (const auto& rec : corpus.records) users_by_text[rec.text] = rec.distinct_users;
    auto rows = parse_dataset_file(artifact::dataset(cfg));
    REQUIRE_FALSE(rows.empty());
    bool any_true = false;
    bool any_false = false;
    for (const auto& row : rows) {
        REQUIRE(users_by_text.count(row.query));
        CHECK(users_by_text[row.query] >= cfg.k);
        (row.is_code_search_query ? any_true : any_false) = true;
    }
    // the export keeps both intent classes, distinguished by the flag
    CHECK(any_true);
    CHECK(any_false);
}

TEST_CASE("identical configs reproduce identical artifacts", "[pipeline]") {
    TempDir dir_a("repro_a");
    TempDir dir_b("repro_b");
    PipelineConfig cfg_a = mini_config(dir_a);
    PipelineConfig cfg_b = mini_config(dir_b);
    run_all_stages(cfg_a);
    run_all_stages(cfg_b);
    for (const std::string leaf :
         {"corpus.jsonl", "label_matrix.json", "label_model.json",
          "train_labels.tsv", "embeddings.txt", "classifier.json", "split.json",
          "eval_report.txt", "eval_report.json", "dataset.tsv"}) {
        INFO(leaf);
        CHECK(read_file(cfg_a.output_dir + "/" + leaf) ==
              read_file(cfg_b.output_dir + "/" + leaf));
    }
}

TEST_CASE("gold files with annotator columns feed kappa into the report",
          "[pipeline]") {
    TempDir dir("gold_annotators");
    PipelineConfig cfg = mini_config(dir);
    run_all_stages(cfg);
    // rewrite the truth file as a three-annotator gold file over the same queries
    std::vector<GoldItem> truth = load_gold_file(cfg.truth_file);
    std::string gold_path = dir / "gold3.tsv";
    {
        std::ofstream out(gold_path);
        for (const auto& item : truth) {
            int flip = item.id % 7 == 0;  // one dissenting annotator sometimes
            out << item.id << '\t' << item.query << '\t' << item.gold << '\t'
                << item.gold << '\t' << (flip ? 1 - item.gold : item.gold) << '\n';
        }
    }
    cfg.gold_file = gold_path;
    run_stage("evaluate", cfg);
    auto report = nlohmann::json::parse(std::ifstream(artifact::report_json(cfg)));
    REQUIRE(report.contains("fleiss_kappa"));
    double kappa = report.at("fleiss_kappa").get<double>();
    CHECK(kappa > 0.0);
    CHECK(kappa <= 1.0);
}
