// Command-line front end for the federated bot-detection simulator.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedack/common.hpp"
#include "fedack/experiment.hpp"
#include "fedack/lingual.hpp"

using namespace fedack;

namespace {

ExperimentConfig load_config(const std::string& config_path,
                             const std::string& method_override) {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = ExperimentConfig::from_json_file(config_path);
    if (!method_override.empty()) cfg.method = method_from_string(method_override);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated adversarial-contrastive KD simulator for social bot detection"};
    app.require_subcommand(1);

    // --- gen-data ---
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic account dataset (JSONL)");
    SynthSpec synth;
    std::string gen_out = "dataset.jsonl";
    gen->add_option("--users", synth.n_users, "Number of accounts");
    gen->add_option("--p-dim", synth.prop_dim, "Property vector dimension");
    gen->add_option("--embed-dim", synth.embed_dim, "Token embedding dimension");
    gen->add_option("--tweets-min", synth.tweets_min, "Min tweets per account");
    gen->add_option("--tweets-max", synth.tweets_max, "Max tweets per account");
    gen->add_option("--sep", synth.class_sep, "Class separation");
    gen->add_option("--seed", synth.seed, "Seed");
    gen->add_option("-o,--out", gen_out, "Output path");

    // --- partition ---
    auto* part = app.add_subcommand("partition", "Dirichlet-partition a dataset across clients");
    std::string part_data, part_out = "partition.json";
    PartitionSpec pspec;
    part->add_option("--data", part_data, "Dataset JSONL path")->required();
    part->add_option("--alpha", pspec.concentration, "Dirichlet concentration");
    part->add_option("--clients", pspec.n_clients, "Number of clients");
    part->add_option("--seed", pspec.seed, "Seed");
    part->add_option("-o,--out", part_out, "Output path");

    // --- train ---
    auto* train = app.add_subcommand("train", "Run a federated training experiment");
    std::string train_config, train_method;
    std::vector<std::uint64_t> train_seeds;
    std::string train_out;
    int train_rounds = -1;
    train->add_option("--config", train_config, "JSON configuration file");
    train->add_option("--method", train_method, "fedack|fedack_a|fedavg|fedprox");
    train->add_option("--seeds", train_seeds, "Seeds (overrides config)");
    train->add_option("--rounds", train_rounds, "Rounds (overrides config)");
    train->add_option("--out", train_out, "Output directory (overrides config)");

    // --- sweep ---
    auto* sweep = app.add_subcommand("sweep", "Grid sweep over gamma/mu/tau/alpha");
    std::string sweep_config, sweep_param, sweep_out = "sweep";
    std::vector<double> sweep_values;
    sweep->add_option("--config", sweep_config, "JSON configuration file");
    sweep->add_option("--param", sweep_param, "gamma|mu|tau|alpha")->required();
    sweep->add_option("--values", sweep_values, "Grid values")->required();
    sweep->add_option("--out", sweep_out, "Sweep output directory");

    // --- export-features ---
    auto* exportf = app.add_subcommand("export-features",
                                       "Export planar features from a finished run");
    std::string export_run, export_out = "features.csv";
    exportf->add_option("--run-dir", export_run, "Run directory (out/<method>/seed_<s>)")
        ->required();
    exportf->add_option("-o,--out", export_out, "Output CSV");

    // --- align ---
    auto* align = app.add_subcommand("align", "Train the cross-lingual embedding mapper");
    int align_pairs = 500, align_dim = 16, align_tokens = 6, align_epochs = 200;
    double align_noise = 0.01;
    std::uint64_t align_seed = 0;
    double align_pair_weight = 1.0;
    std::string align_report = "alignment_report.json";
    align->add_option("--pairs", align_pairs, "Number of synthetic bilingual pairs");
    align->add_option("--dim", align_dim, "Embedding dimension");
    align->add_option("--tokens", align_tokens, "Tokens per side");
    align->add_option("--noise", align_noise, "Noise sigma");
    align->add_option("--epochs", align_epochs, "Training epochs");
    align->add_option("--seed", align_seed, "Seed");
    align->add_option("--pair-weight", align_pair_weight,
                      "Weight of the parallel-pair term (0 = adversarial only)");
    align->add_option("-o,--out", align_report, "Report output path");

    // --- score-consistency ---
    auto* score = app.add_subcommand("score-consistency",
                                     "Cross-client feature consistency from a features CSV");
    std::string score_csv;
    score->add_option("--features", score_csv, "features.csv from export-features")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            Dataset ds = synth_dataset(synth);
            save_jsonl(ds, gen_out);
            std::cout << "wrote " << ds.users.size() << " users to " << gen_out << "\n";
        } else if (*part) {
            Dataset ds = load_jsonl(part_data);
            Partition p = dirichlet_partition(ds, pspec);
            save_partition(p, ds, part_out);
            std::cout << "wrote " << p.shards.size() << " shards to " << part_out << "\n";
        } else if (*train) {
            ExperimentConfig cfg = load_config(train_config, train_method);
            if (!train_seeds.empty()) cfg.seeds = train_seeds;
            if (train_rounds > 0) cfg.rounds = train_rounds;
            if (!train_out.empty()) cfg.out_dir = train_out;
            std::cout << "effective configuration:\n" << cfg.to_json() << "\n";
            MultiRunSummary s = cmd_train(cfg);
            std::cout << method_to_string(cfg.method)
                      << ": mean max accuracy = " << fmt_double(s.mean_max_accuracy)
                      << " +/- " << fmt_double(s.std_max_accuracy) << " over "
                      << s.runs.size() << " seeds\n";
        } else if (*sweep) {
            ExperimentConfig cfg = load_config(sweep_config, "");
            std::cout << "effective configuration:\n" << cfg.to_json() << "\n";
            cmd_sweep(cfg, sweep_param, sweep_values, sweep_out);
            std::cout << "sweep written to " << sweep_out << "\n";
        } else if (*exportf) {
            cmd_export_features(export_run, export_out);
            std::cout << "features written to " << export_out << "\n";
        } else if (*align) {
            auto pairs = synth_bilingual(align_pairs, align_dim, align_tokens, align_noise,
                                         align_seed);
            MapperConfig mcfg;
            mcfg.dim = align_dim;
            mcfg.pair_weight = align_pair_weight;
            auto [state, report] = train_alignment(pairs, align_epochs, align_seed, mcfg);
            report.save(align_report);
            std::cout << "alignment report written to " << align_report
                      << " (holdout cosine " << fmt_double(report.final_holdout_cosine)
                      << ")\n";
        } else if (*score) {
            const double s = feature_consistency_score(score_csv);
            std::cout << "consistency_score " << fmt_double(s) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
