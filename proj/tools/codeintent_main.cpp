#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "codeintent/pipeline.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    // stage overrides; only applied when the flag was passed
    long long k = 0;
    bool k_set = false;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string model;
    std::string label_mode;
    std::string language;
    std::size_t synth_size = 0;
    bool size_set = false;
    std::string output_dir;
};

codeintent::PipelineConfig resolve_config(const CliOptions& opts) {
    codeintent::PipelineConfig cfg = codeintent::load_pipeline_config(opts.config_path);
    if (opts.k_set) cfg.k = opts.k;
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.model.empty()) cfg.model = codeintent::parse_model_kind(opts.model);
    if (!opts.label_mode.empty()) {
        cfg.label_mode = codeintent::parse_label_mode(opts.label_mode);
    }
    if (!opts.language.empty()) {
        cfg.language = codeintent::parse_language(opts.language);
    }
    if (opts.size_set) cfg.synth_size = opts.synth_size;
    if (!opts.output_dir.empty()) cfg.output_dir = opts.output_dir;
    return cfg;
}

void add_common_flags(CLI::App* cmd, CliOptions& opts) {
    cmd->add_option("--config", opts.config_path, "pipeline config file (JSON)")
        ->required();
    cmd->add_option("--k", opts.k, "k-anonymity threshold override")
        ->each([&opts](const std::string&) { opts.k_set = true; });
    cmd->add_option("--seed", opts.seed, "master seed override")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--model", opts.model, "classifier kind")
        ->check(CLI::IsMember({"logistic", "cnn"}));
    cmd->add_option("--label-mode", opts.label_mode, "training label mode")
        ->check(CLI::IsMember({"hard", "soft"}));
    cmd->add_option("--language", opts.language, "target language")
        ->check(CLI::IsMember({"csharp", "java"}));
    cmd->add_option("--output-dir", opts.output_dir, "artifact directory override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "codeintent: weakly-supervised code-search intent classification "
        "pipeline"};
    app.require_subcommand(1);
    CliOptions opts;

    const std::vector<std::string> verbs = {
        "ingest",          "label",    "fit-labelmodel", "train-embeddings",
        "train-classifier", "evaluate", "export-dataset", "synth"};
    const std::vector<std::string> descriptions = {
        "parse and filter the raw query log into the aggregated corpus",
        "apply the learning functions and build the label matrix",
        "fit the generative label model by EM and emit training labels",
        "train skip-gram embeddings from scratch on the corpus",
        "train the discriminative classifier on the weak labels",
        "score majority-vote, generative and classifier predictions",
        "write the anonymized dataset in the published schema",
        "generate a synthetic query log with ground-truth intents"};
    for (std::size_t i = 0; i < verbs.size(); ++i) {
        CLI::App* cmd = app.add_subcommand(verbs[i], descriptions[i]);
        add_common_flags(cmd, opts);
        if (verbs[i] == "synth") {
            cmd->add_option("--size", opts.synth_size, "number of log entries")
                ->each([&opts](const std::string&) { opts.size_set = true; });
        }
    }

    CLI11_PARSE(app, argc, argv);

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        codeintent::run_stage(stage, resolve_config(opts));
    } catch (const std::exception& e) {
        std::cerr << "codeintent " << stage << ": " << e.what() << '\n';
        return 1;
    }
    std::cout << stage << ": done\n";
    return 0;
}
