#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "codeintent/classify.hpp"
#include "codeintent/corpus.hpp"
#include "codeintent/embedding.hpp"
#include "codeintent/eval.hpp"
#include "codeintent/label_model.hpp"
#include "codeintent/labeling.hpp"
#include "codeintent/synthetic.hpp"
#include "codeintent/text.hpp"

namespace codeintent {

struct PipelineConfig {
    std::string output_dir = "out";
    std::string log_file;
    std::string truth_file;  // synth ground truth; default gold set for evaluate
    std::string gold_file;   // optional explicit gold set, overrides truth_file
    Language language = Language::Java;
    std::string locale = "en-US";
    std::string region = "US";
    long long k = 50;
    std::uint64_t seed = 42;
    LabelMode label_mode = LabelMode::Soft;
    ModelKind model = ModelKind::Cnn;
    double threshold = 0.5;
    std::string lf_config_path;       // empty = built-in bank
    std::string stopword_path;        // empty = built-in list
    std::string keyword_config_path;  // empty = built-in sets

    std::size_t synth_size = 5000;

    int lm_max_iter = 100;
    double lm_tol = 1e-6;
    double lm_smoothing = 0.01;
    double lm_init_confidence = 0.7;

    SkipgramConfig embedding;

    int max_len = 16;
    std::vector<int> cnn_widths = {2, 3, 4};
    int filters_per_width = 64;
    int train_epochs = 20;
    int batch_size = 32;
    double lr_logistic = 0.05;
    double lr_cnn = 0.01;
    double l2 = 1e-4;
    double validation_fraction = 0.2;
};

inline PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
    PipelineConfig cfg;
    auto get = [&j](const char* key, auto fallback) {
        using T = decltype(fallback);
        return j.contains(key) ? j.at(key).get<T>() : fallback;
    };
    cfg.output_dir = get("output_dir", cfg.output_dir);
    cfg.log_file = get("log_file", cfg.log_file);
    cfg.truth_file = get("truth_file", cfg.truth_file);
    cfg.gold_file = get("gold_file", cfg.gold_file);
    if (j.contains("language")) {
        cfg.language = parse_language(j.at("language").get<std::string>());
    }
    cfg.locale = get("locale", cfg.locale);
    cfg.region = get("region", cfg.region);
    cfg.k = get("k", cfg.k);
    cfg.seed = get("seed", cfg.seed);
    if (j.contains("label_mode")) {
        cfg.label_mode = parse_label_mode(j.at("label_mode").get<std::string>());
    }
    if (j.contains("model")) {
        cfg.model = parse_model_kind(j.at("model").get<std::string>());
    }
    cfg.threshold = get("threshold", cfg.threshold);
    cfg.lf_config_path = get("lf_config", cfg.lf_config_path);
    cfg.stopword_path = get("stopword_file", cfg.stopword_path);
    cfg.keyword_config_path = get("keyword_config", cfg.keyword_config_path);
    if (j.contains("synth")) {
        cfg.synth_size = j.at("synth").value("size", cfg.synth_size);
    }
    if (j.contains("label_model")) {
        const auto& lm = j.at("label_model");
        cfg.lm_max_iter = lm.value("max_iter", cfg.lm_max_iter);
        cfg.lm_tol = lm.value("tol", cfg.lm_tol);
        cfg.lm_smoothing = lm.value("smoothing", cfg.lm_smoothing);
        cfg.lm_init_confidence = lm.value("init_confidence", cfg.lm_init_confidence);
    }
    if (j.contains("embedding")) {
        const auto& e = j.at("embedding");
        cfg.embedding.dim = e.value("dim", cfg.embedding.dim);
        cfg.embedding.window = e.value("window", cfg.embedding.window);
        cfg.embedding.negatives = e.value("negatives", cfg.embedding.negatives);
        cfg.embedding.epochs = e.value("epochs", cfg.embedding.epochs);
        cfg.embedding.learning_rate =
            e.value("learning_rate", cfg.embedding.learning_rate);
        cfg.embedding.min_count = e.value("min_count", cfg.embedding.min_count);
    }
    if (j.contains("classifier")) {
        const auto& c = j.at("classifier");
        cfg.max_len = c.value("max_len", cfg.max_len);
        cfg.cnn_widths = c.value("widths", cfg.cnn_widths);
        cfg.filters_per_width = c.value("filters_per_width", cfg.filters_per_width);
        cfg.train_epochs = c.value("epochs", cfg.train_epochs);
        cfg.batch_size = c.value("batch_size", cfg.batch_size);
        cfg.lr_logistic = c.value("lr_logistic", cfg.lr_logistic);
        cfg.lr_cnn = c.value("lr_cnn", cfg.lr_cnn);
        cfg.l2 = c.value("l2", cfg.l2);
        cfg.validation_fraction =
            c.value("validation_fraction", cfg.validation_fraction);
    }
    return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pipeline config: " + path);
    return parse_pipeline_config(nlohmann::json::parse(in));
}

// --- artifacts ---------------------------------------------------------------

namespace artifact {

inline std::string corpus(const PipelineConfig& c) { return c.output_dir + "/corpus.jsonl"; }
inline std::string matrix(const PipelineConfig& c) { return c.output_dir + "/label_matrix.json"; }
inline std::string label_model(const PipelineConfig& c) { return c.output_dir + "/label_model.json"; }
inline std::string training_labels(const PipelineConfig& c) { return c.output_dir + "/train_labels.tsv"; }
inline std::string embeddings(const PipelineConfig& c) { return c.output_dir + "/embeddings.txt"; }
inline std::string checkpoint(const PipelineConfig& c) { return c.output_dir + "/classifier.json"; }
inline std::string split(const PipelineConfig& c) { return c.output_dir + "/split.json"; }
inline std::string report_text(const PipelineConfig& c) { return c.output_dir + "/eval_report.txt"; }
inline std::string report_json(const PipelineConfig& c) { return c.output_dir + "/eval_report.json"; }
inline std::string dataset(const PipelineConfig& c) { return c.output_dir + "/dataset.tsv"; }

}  // namespace artifact

namespace detail {

inline std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file: " + path);
    std::uint64_t hash = 1469598103934665603ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 1099511628211ull;
        }
    }
    return hash;
}

// Checks a stage input exists, naming the stage that produces it.
inline void require_artifact(const std::string& requested_stage,
                             const std::string& path,
                             const std::string& producing_stage) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error("stage '" + requested_stage +
                                 "' requires artifact '" + path +
                                 "'; run stage '" + producing_stage + "' first");
    }
}

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    long long elapsed_ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline void write_manifest(const PipelineConfig& cfg, const std::string& stage,
                           const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs,
                           const std::map<std::string, std::uint64_t>& seeds,
                           long long duration_ms,
                           nlohmann::ordered_json extra = {}) {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["tool_version"] = "0.1.0";
    j["duration_ms"] = duration_ms;
    nlohmann::ordered_json seeds_json;
    for (const auto& [name, value] : seeds) seeds_json[name] = value;
    j["seeds"] = std::move(seeds_json);
    auto hash_list = [](const std::vector<std::string>& paths) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& p : paths) {
            nlohmann::ordered_json f;
            f["path"] = p;
            f["fnv1a64"] = fnv1a64_file(p);
            arr.push_back(std::move(f));
        }
        return arr;
    };
    j["inputs"] = hash_list(inputs);
    j["outputs"] = hash_list(outputs);
    if (!extra.is_null()) j["stats"] = std::move(extra);
    std::ofstream out(cfg.output_dir + "/manifest_" + stage + ".json");
    out << j.dump(2) << '\n';
}

inline std::vector<LearningFunctionSpec> resolve_lfs(const PipelineConfig& cfg) {
    return cfg.lf_config_path.empty() ? default_learning_functions()
                                      : load_learning_functions(cfg.lf_config_path);
}

inline std::set<std::string> resolve_stopwords(const PipelineConfig& cfg) {
    return cfg.stopword_path.empty() ? default_stopwords()
                                     : load_stopwords(cfg.stopword_path);
}

inline std::vector<LanguageKeywordSet> resolve_keyword_sets(
    const PipelineConfig& cfg) {
    return cfg.keyword_config_path.empty() ? default_keyword_sets()
                                           : load_keyword_sets(cfg.keyword_config_path);
}

// per-stage seeds derived from the master seed
inline std::uint64_t seed_synth(const PipelineConfig& c) { return c.seed; }
inline std::uint64_t seed_label_model(const PipelineConfig& c) { return c.seed + 1; }
inline std::uint64_t seed_embeddings(const PipelineConfig& c) { return c.seed + 2; }
inline std::uint64_t seed_classifier(const PipelineConfig& c) { return c.seed + 3; }
inline std::uint64_t seed_split(const PipelineConfig& c) { return c.seed + 4; }

inline TokenizedQuery featurization_tokens(const std::string& text,
                                           const std::set<std::string>& stopwords) {
    return remove_stopwords(tokenize(text), stopwords);
}

}  // namespace detail

// --- dataset export ------------------------------------------------------------

// One exported row; field names follow the published schema header.
struct DatasetRecord {
    long long id = 0;
    std::string query;
    bool is_code_search_query = false;
    std::vector<std::string> top_clicked_urls;
    long long popularity_rank = 0;
};

namespace detail {

// URLs live comma-delimited inside one tab-separated field, so the escape
// set is {%, comma, tab, newline, carriage return}.
inline std::string percent_encode(const std::string& s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        if (c == '%' || c == ',' || c == '\t' || c == '\n' || c == '\r') {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

inline std::string percent_decode(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size()) {
            out.push_back(static_cast<char>(
                std::stoi(s.substr(i + 1, 2), nullptr, 16)));
            i += 2;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

}  // namespace detail

// Applies the language filter, the k-anonymity filter and the trained
// classifier, then re-ranks the surviving records so popularity ranks are
// dense from 1. Both intent classes are kept, distinguished by the flag.
inline std::vector<DatasetRecord> export_dataset(
    const Corpus& corpus, const std::vector<LanguageKeywordSet>& sets,
    const ClassifierPipeline& pipeline, const EmbeddingTable& table,
    const std::set<std::string>& stopwords, long long k) {
    const bool trained = pipeline.kind == ModelKind::Logistic
                             ? !pipeline.logistic.weights.empty()
                             : pipeline.cnn.dim > 0;
    if (!trained) {
        throw std::runtime_error("export_dataset: classifier is not trained");
    }
    Corpus filtered = apply_k_anonymity(
        filter_language(corpus, sets, corpus.language), k);
    filtered = assign_popularity_ranks(std::move(filtered));
    std::vector<const QueryRecord*> by_rank(filtered.records.size());
    for (const auto& rec : filtered.records) {
        by_rank[rec.popularity_rank - 1] = &rec;
    }
    std::vector<DatasetRecord> rows;
    rows.reserve(by_rank.size());
    for (std::size_t i = 0; i < by_rank.size(); ++i) {
        const QueryRecord& rec = *by_rank[i];
        DatasetRecord row;
        row.id = static_cast<long long>(i + 1);
        row.query = rec.text;
        row.is_code_search_query =
            classify_query(pipeline, table, stopwords, rec.text).label == 1;
        row.top_clicked_urls = rec.top_clicked_urls;
        row.popularity_rank = rec.popularity_rank;
        rows.push_back(std::move(row));
    }
    return rows;
}

inline const char* kDatasetHeader =
    "Id\tQuery\tIsCodeSearchQuery\tTopClickedUrls\tPopularityRank";

inline void write_dataset(std::ostream& out,
                          const std::vector<DatasetRecord>& rows) {
    out << kDatasetHeader << '\n';
    for (const auto& row : rows) {
        out << row.id << '\t' << row.query << '\t'
            << (row.is_code_search_query ? "true" : "false") << '\t';
        for (std::size_t i = 0; i < row.top_clicked_urls.size(); ++i) {
            if (i > 0) out << ',';
            out << detail::percent_encode(row.top_clicked_urls[i]);
        }
        out << '\t' << row.popularity_rank << '\n';
    }
}

inline void write_dataset_file(const std::string& path,
                               const std::vector<DatasetRecord>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset: " + path);
    write_dataset(out, rows);
}

inline std::vector<DatasetRecord> parse_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kDatasetHeader) {
        throw std::runtime_error("dataset file missing the schema header");
    }
    std::vector<DatasetRecord> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (cols.size() != 5) {
            throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                     ": expected 5 columns, got " +
                                     std::to_string(cols.size()));
        }
        DatasetRecord row;
        row.id = std::stoll(cols[0]);
        row.query = cols[1];
        if (cols[2] == "true") {
            row.is_code_search_query = true;
        } else if (cols[2] == "false") {
            row.is_code_search_query = false;
        } else {
            throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                     ": bad boolean '" + cols[2] + "'");
        }
        if (!cols[3].empty()) {
            std::stringstream urls(cols[3]);
            std::string url;
            while (std::getline(urls, url, ',')) {
                row.top_clicked_urls.push_back(detail::percent_decode(url));
            }
        }
        row.popularity_rank = std::stoll(cols[4]);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<DatasetRecord> parse_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    return parse_dataset(in);
}

// --- stages ---------------------------------------------------------------------

namespace stages {

inline void synth(const PipelineConfig& cfg) {
    detail::StageTimer timer;
    if (cfg.log_file.empty() || cfg.truth_file.empty()) {
        throw std::runtime_error(
            "stage 'synth' needs log_file and truth_file paths in the config");
    }
    SyntheticConfig scfg;
    scfg.language = cfg.language;
    scfg.size = cfg.synth_size;
    scfg.seed = detail::seed_synth(cfg);
    SyntheticCorpus synth = generate_synthetic_corpus(scfg);
    write_log_file(cfg.log_file, synth.entries);
    write_truth_file(cfg.truth_file, synth.truth);
    nlohmann::ordered_json stats;
    stats["entries"] = synth.entries.size();
    stats["distinct_queries"] = synth.truth.size();
    detail::write_manifest(cfg, "synth", {}, {cfg.log_file, cfg.truth_file},
                           {{"synth", scfg.seed}}, timer.elapsed_ms(), stats);
}

inline void ingest(const PipelineConfig& cfg) {
    detail::StageTimer timer;
    if (!std::filesystem::exists(cfg.log_file)) {
        throw std::runtime_error("stage 'ingest' requires log file '" +
                                 cfg.log_file +
                                 "'; run stage 'synth' first or point log_file "
                                 "at an existing log");
    }
    LogParseResult parsed = parse_log_file(cfg.log_file);
    IngestConfig icfg{cfg.locale, cfg.region, cfg.language};
    IngestResult result = codeintent::ingest(parsed.entries, icfg);
    Corpus corpus = filter_language(result.corpus,
                                    detail::resolve_keyword_sets(cfg), cfg.language);
    corpus = assign_popularity_ranks(std::move(corpus));
    save_corpus(artifact::corpus(cfg), corpus);
    nlohmann::ordered_json stats;
    stats["parsed_entries"] = parsed.entries.size();
    stats["malformed_lines"] = parsed.malformed;
    stats["malformed_entries"] = result.stats.malformed;
    stats["bot_entries"] = result.stats.bots;
    stats["locale_mismatches"] = result.stats.locale_mismatch;
    stats["accepted_entries"] = result.stats.accepted;
    stats["records_before_language_filter"] = result.corpus.records.size();
    stats["records"] = corpus.records.size();
    detail::write_manifest(cfg, "ingest", {cfg.log_file},
                           {artifact::corpus(cfg)}, {}, timer.elapsed_ms(), stats);
}

inline void label(const PipelineConfig& cfg) {
    detail::StageTimer timer;
    detail::require_artifact("label", artifact::corpus(cfg), "ingest");
    Corpus corpus = load_corpus(artifact::corpus(cfg));
    auto lfs = compile_lfs(detail::resolve_lfs(cfg));
    LabelMatrix matrix = build_label_matrix(corpus, lfs);
    save_label_matrix(artifact::matrix(cfg), matrix);
    LfDiagnostics diag = lf_diagnostics(matrix);
    nlohmann::ordered_json stats;
    nlohmann::ordered_json coverage;
    for (std::size_t j = 0; j < matrix.cols; ++j) {
        coverage[matrix.lf_names[j]] = diag.coverage[j];
    }
    stats["coverage"] = std::move(coverage);
    stats["rows"] = matrix.rows;
    stats["cols"] = matrix.cols;
    detail::write_manifest(cfg, "label", {artifact::corpus(cfg)},
                           {artifact::matrix(cfg)}, {}, timer.elapsed_ms(), stats);
}

inline void fit_labelmodel(const PipelineConfig& cfg) {
    detail::StageTimer timer;
    detail::require_artifact("fit-labelmodel", artifact::matrix(cfg), "label");
    LabelMatrix matrix = load_label_matrix(artifact::matrix(cfg));
    EmInit init{cfg.lm_init_confidence, detail::seed_label_model(cfg)};
    LabelModelParams params =
        fit_em(matrix, init, cfg.lm_max_iter, cfg.lm_tol, cfg.lm_smoothing);
    save_label_model(artifact::label_model(cfg), params);
    PosteriorLabels posteriors = compute_posteriors(params, matrix);
    save_training_labels(artifact::training_labels(cfg), matrix.query_ids,
                         posteriors);
    nlohmann::ordered_json stats;
    stats["iterations"] = params.iterations;
    stats["final_log_likelihood"] = params.final_log_likelihood;
    stats["pi"] = params.pi;
    detail::write_manifest(cfg, "fit-labelmodel", {artifact::matrix(cfg)},
                           {artifact::label_model(cfg), artifact::training_labels(cfg)},
                           {{"label_model_init", init.seed}}, timer.elapsed_ms(),
                           stats);
}

inline void train_embeddings(const PipelineConfig& cfg) {
    detail::StageTimer timer;
    detail::require_artifact("train-embeddings", artifact::corpus(cfg), "ingest");
    Corpus corpus = load_corpus(artifact::corpus(cfg));
    auto stopwords = detail::resolve_stopwords(cfg);
    std::vector<TokenizedQuery> tokenized;
    tokenized.reserve(corpus.records.size());
    for (const auto& rec : corpus.records) {
        tokenized.push_back(detail::featurization_tokens(rec.text, stopwords));
    }
    EmbeddingTable table =
        train_skipgram(tokenized, cfg.embedding, detail::seed_embeddings(cfg));
    save_embedding_table(artifact::embeddings(cfg), table);
    nlohmann::ordered_json stats;
    stats["vocabulary"] = table.vocab.size();
    stats["dim"] = table.dim;
    stats["epoch_losses"] = table.epoch_losses;
    detail::write_manifest(cfg, "train-embeddings", {artifact::corpus(cfg)},
                           {artifact::embeddings(cfg)},
                           {{"embeddings", detail::seed_embeddings(cfg)}},
                           timer.elapsed_ms(), stats);
}

// Splits the corpus rows into train/holdout by a seeded shuffle; the holdout
// ids are recorded so `evaluate` scores exactly the rows the classifier
// never saw.
inline void train_classifier(const PipelineConfig& cfg) {
    detail::StageTimer timer;
    detail::require_artifact("train-classifier", artifact::corpus(cfg), "ingest");
    detail::require_artifact("train-classifier", artifact::training_labels(cfg),
                             "fit-labelmodel");
    detail::require_artifact("train-classifier", artifact::embeddings(cfg),
                             "train-embeddings");
    Corpus corpus = load_corpus(artifact::corpus(cfg));
    auto [label_ids, posteriors] = load_training_labels(artifact::training_labels(cfg));
    std::map<long long, std::array<double, 2>> posterior_by_id;
    for (std::size_t i = 0; i < label_ids.size(); ++i) {
        posterior_by_id[label_ids[i]] = posteriors.probs[i];
    }
    EmbeddingTable table = load_embedding_table(artifact::embeddings(cfg));
    auto stopwords = detail::resolve_stopwords(cfg);

    std::vector<std::size_t> order(corpus.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(detail::seed_split(cfg));
    split_rng.shuffle(order);
    auto holdout_count = static_cast<std::size_t>(
        cfg.validation_fraction * static_cast<double>(order.size()));
    std::vector<long long> holdout_ids;
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < holdout_count) {
            holdout_ids.push_back(corpus.records[order[i]].id);
        } else {
            train_rows.push_back(order[i]);
        }
    }
    std::sort(holdout_ids.begin(), holdout_ids.end());
    std::sort(train_rows.begin(), train_rows.end());
    if (train_rows.empty()) {
        throw std::runtime_error("train-classifier: no training rows after split");
    }

    std::vector<double> targets;
    targets.reserve(train_rows.size());
    for (std::size_t row : train_rows) {
        auto it = posterior_by_id.find(corpus.records[row].id);
        if (it == posterior_by_id.end()) {
            throw std::runtime_error(
                "train-classifier: no training label for query id " +
                std::to_string(corpus.records[row].id) +
                "; rerun 'fit-labelmodel'");
        }
        const double p1 = it->second[1];
        targets.push_back(cfg.label_mode == LabelMode::Soft
                              ? p1
                              : (p1 >= it->second[0] ? 1.0 : 0.0));
    }

    TrainConfig tcfg;
    tcfg.epochs = cfg.train_epochs;
    tcfg.batch_size = cfg.batch_size;
    tcfg.seed = detail::seed_classifier(cfg);
    tcfg.label_mode = cfg.label_mode;
    tcfg.validation_fraction = cfg.validation_fraction;
    tcfg.l2 = cfg.l2;

    ClassifierPipeline pipeline;
    pipeline.kind = cfg.model;
    pipeline.threshold = cfg.threshold;
    if (cfg.model == ModelKind::Logistic) {
        tcfg.learning_rate = cfg.lr_logistic;
        std::vector<std::vector<double>> features;
        features.reserve(train_rows.size());
        for (std::size_t row : train_rows) {
            features.push_back(query_embedding(
                detail::featurization_tokens(corpus.records[row].text, stopwords),
                table));
        }
        pipeline.logistic = train_logistic(features, targets, tcfg);
    } else {
        tcfg.learning_rate = cfg.lr_cnn;
        std::vector<std::vector<double>> sequences;
        sequences.reserve(train_rows.size());
        for (std::size_t row : train_rows) {
            sequences.push_back(sequence_embedding(
                detail::featurization_tokens(corpus.records[row].text, stopwords),
                table, cfg.max_len));
        }
        pipeline.cnn = train_cnn(sequences, targets, cfg.max_len, table.dim,
                                 cfg.cnn_widths, cfg.filters_per_width, tcfg);
    }
    save_checkpoint(artifact::checkpoint(cfg), pipeline, tcfg);
    nlohmann::ordered_json split_json;
    split_json["version"] = 1;
    split_json["holdout_ids"] = holdout_ids;
    split_json["train_rows"] = train_rows.size();
    std::ofstream split_out(artifact::split(cfg));
    split_out << split_json.dump(2) << '\n';

    nlohmann::ordered_json stats;
    stats["model"] = model_kind_name(cfg.model);
    stats["train_rows"] = train_rows.size();
    stats["holdout_rows"] = holdout_ids.size();
    detail::write_manifest(
        cfg, "train-classifier",
        {artifact::corpus(cfg), artifact::training_labels(cfg), artifact::embeddings(cfg)},
        {artifact::checkpoint(cfg), artifact::split(cfg)},
        {{"classifier", tcfg.seed}, {"split", detail::seed_split(cfg)}},
        timer.elapsed_ms(), stats);
}

// Scores the majority-vote baseline, the generative model's hard labels and
// the trained classifier on the held-out rows against the gold labels
// (synthetic ground truth or an annotated gold file, matched by normalized
// query text).
inline void evaluate(const PipelineConfig& cfg) {
    detail::StageTimer timer;
    detail::require_artifact("evaluate", artifact::corpus(cfg), "ingest");
    detail::require_artifact("evaluate", artifact::matrix(cfg), "label");
    detail::require_artifact("evaluate", artifact::label_model(cfg), "fit-labelmodel");
    detail::require_artifact("evaluate", artifact::embeddings(cfg), "train-embeddings");
    detail::require_artifact("evaluate", artifact::checkpoint(cfg), "train-classifier");
    detail::require_artifact("evaluate", artifact::split(cfg), "train-classifier");
    const std::string gold_path =
        cfg.gold_file.empty() ? cfg.truth_file : cfg.gold_file;
    if (gold_path.empty() || !std::filesystem::exists(gold_path)) {
        throw std::runtime_error(
            "stage 'evaluate' needs a gold file (config gold_file or the synth "
            "truth_file)");
    }

    Corpus corpus = load_corpus(artifact::corpus(cfg));
    LabelMatrix matrix = load_label_matrix(artifact::matrix(cfg));
    LabelModelParams params = load_label_model(artifact::label_model(cfg));
    EmbeddingTable table = load_embedding_table(artifact::embeddings(cfg));
    ClassifierPipeline pipeline = load_checkpoint(artifact::checkpoint(cfg));
    auto stopwords = detail::resolve_stopwords(cfg);
    std::vector<GoldItem> gold_items = load_gold_file(gold_path);

    std::ifstream split_in(artifact::split(cfg));
    nlohmann::json split_json = nlohmann::json::parse(split_in);
    std::set<long long> holdout(split_json.at("holdout_ids").begin(),
                                split_json.at("holdout_ids").end());

    std::map<std::string, int> gold_by_text;
    for (const auto& item : gold_items) {
        gold_by_text[normalize_query(item.query)] = item.gold;
    }

    std::vector<int> mv_all = majority_vote(matrix, detail::seed_label_model(cfg));
    PosteriorLabels post = compute_posteriors(params, matrix);
    std::map<long long, std::size_t> row_by_id;
    for (std::size_t i = 0; i < matrix.query_ids.size(); ++i) {
        row_by_id[matrix.query_ids[i]] = i;
    }

    std::vector<std::pair<long long, int>> golds;
    std::vector<std::pair<long long, int>> mv_preds;
    std::vector<std::pair<long long, int>> gen_preds;
    std::vector<std::pair<long long, int>> clf_preds;
    for (const auto& rec : corpus.records) {
        if (!holdout.count(rec.id)) continue;
        auto gold_it = gold_by_text.find(rec.text);
        if (gold_it == gold_by_text.end()) continue;
        auto row_it = row_by_id.find(rec.id);
        if (row_it == row_by_id.end()) continue;
        const std::size_t row = row_it->second;
        golds.emplace_back(rec.id, gold_it->second);
        mv_preds.emplace_back(rec.id, mv_all[row]);
        gen_preds.emplace_back(rec.id,
                               post.probs[row][1] >= post.probs[row][0] ? 1 : 0);
        clf_preds.emplace_back(
            rec.id, classify_query(pipeline, table, stopwords, rec.text).label);
    }
    if (golds.empty()) {
        throw std::runtime_error(
            "evaluate: no held-out query matches the gold file");
    }

    EvalReport mv_report = evaluate_model(mv_preds, golds);
    EvalReport gen_report = evaluate_model(gen_preds, golds);
    EvalReport clf_report = evaluate_model(clf_preds, golds);

    nlohmann::ordered_json j;
    j["version"] = 1;
    j["n"] = mv_report.n;
    j["prevalence"] = mv_report.prevalence;
    RatingsTable ratings = ratings_from_gold(gold_items);
    if (!ratings.counts.empty()) {
        j["fleiss_kappa"] = fleiss_kappa(ratings);
    }
    j["systems"] = {{"majority_vote", report_to_json(mv_report)},
                    {"generative", report_to_json(gen_report)},
                    {model_kind_name(pipeline.kind), report_to_json(clf_report)}};
    std::ofstream json_out(artifact::report_json(cfg));
    json_out << j.dump(2) << '\n';

    std::ofstream text_out(artifact::report_text(cfg));
    text_out << "Evaluation on " << mv_report.n
             << " held-out queries (positive prevalence "
             << mv_report.prevalence << ")\n";
    if (j.contains("fleiss_kappa")) {
        text_out << "Annotator agreement (Fleiss' kappa): "
                 << j["fleiss_kappa"].get<double>() << "\n";
    }
    text_out << '\n'
             << render_report_table({{"majority_vote", mv_report},
                                     {"generative", gen_report},
                                     {model_kind_name(pipeline.kind), clf_report}});

    detail::write_manifest(
        cfg, "evaluate",
        {artifact::corpus(cfg), artifact::matrix(cfg), artifact::label_model(cfg),
         artifact::embeddings(cfg), artifact::checkpoint(cfg), gold_path},
        {artifact::report_text(cfg), artifact::report_json(cfg)}, {},
        timer.elapsed_ms());
}

inline void export_stage(const PipelineConfig& cfg) {
    detail::StageTimer timer;
    detail::require_artifact("export-dataset", artifact::corpus(cfg), "ingest");
    detail::require_artifact("export-dataset", artifact::embeddings(cfg),
                             "train-embeddings");
    detail::require_artifact("export-dataset", artifact::checkpoint(cfg),
                             "train-classifier");
    Corpus corpus = load_corpus(artifact::corpus(cfg));
    corpus.language = cfg.language;
    EmbeddingTable table = load_embedding_table(artifact::embeddings(cfg));
    ClassifierPipeline pipeline = load_checkpoint(artifact::checkpoint(cfg));
    auto stopwords = detail::resolve_stopwords(cfg);
    auto rows = export_dataset(corpus, detail::resolve_keyword_sets(cfg), pipeline,
                               table, stopwords, cfg.k);
    write_dataset_file(artifact::dataset(cfg), rows);
    nlohmann::ordered_json stats;
    stats["rows"] = rows.size();
    stats["k"] = cfg.k;
    detail::write_manifest(
        cfg, "export-dataset",
        {artifact::corpus(cfg), artifact::embeddings(cfg), artifact::checkpoint(cfg)},
        {artifact::dataset(cfg)}, {}, timer.elapsed_ms(), stats);
}

}  // namespace stages

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {
        "ingest",          "label",    "fit-labelmodel", "train-embeddings",
        "train-classifier", "evaluate", "export-dataset"};
    return names;
}

inline void run_stage(const std::string& stage, const PipelineConfig& cfg) {
    std::filesystem::create_directories(cfg.output_dir);
    if (stage == "synth") stages::synth(cfg);
    else if (stage == "ingest") stages::ingest(cfg);
    else if (stage == "label") stages::label(cfg);
    else if (stage == "fit-labelmodel") stages::fit_labelmodel(cfg);
    else if (stage == "train-embeddings") stages::train_embeddings(cfg);
    else if (stage == "train-classifier") stages::train_classifier(cfg);
    else if (stage == "evaluate") stages::evaluate(cfg);
    else if (stage == "export-dataset") stages::export_stage(cfg);
    else throw std::invalid_argument("unknown stage: " + stage);
}

}  // namespace codeintent
