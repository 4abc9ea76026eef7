#include "fedack/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "fedack/common.hpp"

namespace fedack {

using nlohmann::ordered_json;

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

Method method_from_string(const std::string& s) {
    if (s == "fedack") return Method::fedack;
    if (s == "fedack_a") return Method::fedack_a;
    if (s == "fedavg") return Method::fedavg;
    if (s == "fedprox") return Method::fedprox;
    fail("unknown method '" + s + "' (expected fedack|fedack_a|fedavg|fedprox)");
}

std::string method_to_string(Method m) {
    switch (m) {
        case Method::fedack: return "fedack";
        case Method::fedack_a: return "fedack_a";
        case Method::fedavg: return "fedavg";
        case Method::fedprox: return "fedprox";
    }
    fail("method_to_string: bad method");
}

void ExperimentConfig::validate() const {
    check(rounds >= 1, "config: rounds must be >= 1");
    check(local_steps >= 1, "config: local_steps must be >= 1");
    check(batch >= 1, "config: batch must be >= 1");
    check(lr > 0.0, "config: lr must be > 0");
    check(select_fraction > 0.0 && select_fraction <= 1.0,
          "config: select_fraction must be in (0, 1]");
    check(!seeds.empty(), "config: need at least one seed");
    check(test_frac > 0.0 && test_frac < 1.0, "config: test_frac must be in (0, 1)");
    weights.validate();
}

LossWeights ExperimentConfig::effective_weights() const {
    LossWeights w = weights;
    if (method == Method::fedack_a) w.mu = 0.0; // ablation: contrastive removed
    return w;
}

std::filesystem::path ExperimentConfig::resolved_out_dir() const {
    std::filesystem::path p(out_dir);
    if (p.is_relative()) {
        if (const char* root = std::getenv("FEDACK_OUT")) return std::filesystem::path(root) / p;
    }
    return p;
}

std::string ExperimentConfig::to_json() const {
    ordered_json j;
    j["dataset"] = ordered_json::object();
    if (dataset_path)
        j["dataset"]["path"] = *dataset_path;
    j["dataset"]["users"] = synth.n_users;
    j["dataset"]["p_dim"] = synth.prop_dim;
    j["dataset"]["embed_dim"] = synth.embed_dim;
    j["dataset"]["tweets_min"] = synth.tweets_min;
    j["dataset"]["tweets_max"] = synth.tweets_max;
    j["dataset"]["tokens_min"] = synth.tokens_min;
    j["dataset"]["tokens_max"] = synth.tokens_max;
    j["dataset"]["class_sep"] = synth.class_sep;
    j["test_frac"] = test_frac;
    j["partition"] = {{"concentration", partition.concentration},
                      {"clients", partition.n_clients}};
    j["method"] = method_to_string(method);
    j["rounds"] = rounds;
    j["local_steps"] = local_steps;
    j["batch"] = batch;
    j["lr"] = lr;
    j["weights"] = {{"alpha_kd", weights.alpha_kd},
                    {"gamma", weights.gamma},
                    {"mu", weights.mu},
                    {"tau", weights.tau}};
    j["select_fraction"] = select_fraction;
    j["seeds"] = seeds;
    j["out_dir"] = out_dir;
    j["model"] = {{"hidden", model.hidden},
                  {"feature_dim", model.feature_dim},
                  {"attention_dim", model.attention_dim},
                  {"noise_dim", model.noise_dim},
                  {"disc_hidden", model.disc_hidden},
                  {"gen_hidden", model.gen_hidden}};
    if (model.d2_hidden) j["model"]["d2_hidden"] = *model.d2_hidden;
    j["fedprox_rho"] = fedprox_rho;
    j["distill"] = {{"steps", distill.steps},
                    {"batch", distill.batch},
                    {"finetune_disc", distill.finetune_disc}};
    j["parallel_clients"] = parallel_clients;
    j["checkpoint_every_round"] = checkpoint_every_round;
    j["targets"] = targets;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    ExperimentConfig cfg;
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        fail(std::string("config: malformed JSON (") + e.what() + ")");
    }
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        if (d.contains("path") && !d["path"].is_null())
            cfg.dataset_path = d["path"].get<std::string>();
        cfg.synth.n_users = d.value("users", cfg.synth.n_users);
        cfg.synth.prop_dim = d.value("p_dim", cfg.synth.prop_dim);
        cfg.synth.embed_dim = d.value("embed_dim", cfg.synth.embed_dim);
        cfg.synth.tweets_min = d.value("tweets_min", cfg.synth.tweets_min);
        cfg.synth.tweets_max = d.value("tweets_max", cfg.synth.tweets_max);
        cfg.synth.tokens_min = d.value("tokens_min", cfg.synth.tokens_min);
        cfg.synth.tokens_max = d.value("tokens_max", cfg.synth.tokens_max);
        cfg.synth.class_sep = d.value("class_sep", cfg.synth.class_sep);
    }
    cfg.test_frac = j.value("test_frac", cfg.test_frac);
    if (j.contains("partition")) {
        cfg.partition.concentration =
            j["partition"].value("concentration", cfg.partition.concentration);
        cfg.partition.n_clients = j["partition"].value("clients", cfg.partition.n_clients);
    }
    if (j.contains("method")) cfg.method = method_from_string(j["method"].get<std::string>());
    cfg.rounds = j.value("rounds", cfg.rounds);
    cfg.local_steps = j.value("local_steps", cfg.local_steps);
    cfg.batch = j.value("batch", cfg.batch);
    cfg.lr = j.value("lr", cfg.lr);
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        cfg.weights.alpha_kd = w.value("alpha_kd", cfg.weights.alpha_kd);
        cfg.weights.gamma = w.value("gamma", cfg.weights.gamma);
        cfg.weights.mu = w.value("mu", cfg.weights.mu);
        cfg.weights.tau = w.value("tau", cfg.weights.tau);
    }
    cfg.select_fraction = j.value("select_fraction", cfg.select_fraction);
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("model")) {
        const auto& m = j["model"];
        cfg.model.hidden = m.value("hidden", cfg.model.hidden);
        cfg.model.feature_dim = m.value("feature_dim", cfg.model.feature_dim);
        cfg.model.attention_dim = m.value("attention_dim", cfg.model.attention_dim);
        cfg.model.noise_dim = m.value("noise_dim", cfg.model.noise_dim);
        if (m.contains("disc_hidden"))
            cfg.model.disc_hidden = m["disc_hidden"].get<std::vector<int>>();
        if (m.contains("gen_hidden"))
            cfg.model.gen_hidden = m["gen_hidden"].get<std::vector<int>>();
        if (m.contains("d2_hidden"))
            cfg.model.d2_hidden = m["d2_hidden"].get<std::vector<int>>();
    }
    cfg.fedprox_rho = j.value("fedprox_rho", cfg.fedprox_rho);
    if (j.contains("distill")) {
        cfg.distill.steps = j["distill"].value("steps", cfg.distill.steps);
        cfg.distill.batch = j["distill"].value("batch", cfg.distill.batch);
        cfg.distill.finetune_disc =
            j["distill"].value("finetune_disc", cfg.distill.finetune_disc);
    }
    cfg.parallel_clients = j.value("parallel_clients", cfg.parallel_clients);
    cfg.checkpoint_every_round =
        j.value("checkpoint_every_round", cfg.checkpoint_every_round);
    if (j.contains("targets")) cfg.targets = j["targets"].get<std::vector<double>>();
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    check(in.good(), "config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::string ExperimentConfig::hash() const {
    // FNV-1a 64 over the canonical dump.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_json()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::optional<int> rounds_to_target(const std::vector<double>& curve, double target) {
    check(!curve.empty(), "rounds_to_target: empty curve");
    check(target > 0.0 && target < 1.0, "rounds_to_target: target must be in (0, 1)");
    for (size_t i = 0; i < curve.size(); ++i)
        if (curve[i] >= target) return static_cast<int>(i) + 1;
    return std::nullopt;
}

std::string RunResult::to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["max_accuracy"] = max_accuracy;
    j["accuracy_curve"] = accuracy_curve;
    ordered_json rt = ordered_json::object();
    for (const auto& [target, round] : rounds_to_target_map) {
        if (round)
            rt[fmt_double(target)] = *round;
        else
            rt[fmt_double(target)] = nullptr;
    }
    j["rounds_to_target"] = std::move(rt);
    j["wall_seconds"] = wall_seconds;
    return j.dump(2);
}

namespace {

ClientModels build_models(const ExperimentConfig& cfg, const DatasetHeader& header) {
    ClientModels m;
    m.extractor.prop_dim = header.prop_dim;
    m.extractor.tweet_embed_dim = header.embed_dim;
    m.extractor.hidden_dim = cfg.model.hidden;
    m.extractor.feature_dim = cfg.model.feature_dim;
    m.extractor.attention_dim = cfg.model.attention_dim;
    m.d1.input_dim = cfg.model.feature_dim;
    m.d1.hidden = cfg.model.disc_hidden;
    m.d1.classes = 2;
    m.d2 = m.d1;
    if (cfg.model.d2_hidden) m.d2.hidden = *cfg.model.d2_hidden;
    m.gen.noise_dim = cfg.model.noise_dim;
    m.gen.classes = 2;
    m.gen.hidden = cfg.model.gen_hidden;
    m.gen.feature_dim = cfg.model.feature_dim;
    return m;
}

Dataset load_or_synth(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.dataset_path) return load_jsonl(*cfg.dataset_path);
    SynthSpec spec = cfg.synth;
    spec.seed = seed;
    return synth_dataset(spec);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    check(out.good(), "cannot open " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
    check(out.good(), "write failed for " + path.string());
}

void save_checkpoint(const ServerState& server, const RoundReport& report,
                     const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    server.global_extractor.save(dir / "global_extractor.json");
    server.global_disc.save(dir / "global_disc.json");
    server.global_gen.save(dir / "global_gen.json");
    write_text(dir / "report.json", report.to_json());
}

void save_client_extractor(const ClientState& client, const ExtractorConfig& cfg,
                           std::uint64_t seed, const std::filesystem::path& path) {
    ordered_json j;
    j["config"] = {{"prop_dim", cfg.prop_dim},
                   {"tweet_embed_dim", cfg.tweet_embed_dim},
                   {"hidden_dim", cfg.hidden_dim},
                   {"feature_dim", cfg.feature_dim},
                   {"attention_dim", cfg.attention_dim},
                   {"seed", seed},
                   {"client_id", client.client_id}};
    j["params"] = ordered_json::parse(client.extractor.to_json());
    write_text(path, j.dump());
}

} // namespace

RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed,
                     const std::filesystem::path& run_dir) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    std::filesystem::create_directories(run_dir);
    write_text(run_dir / "effective_config.json", cfg.to_json());

    Dataset ds = load_or_synth(cfg, seed);
    ds.validate();
    auto [train_idx, test_idx] = stratified_split(ds, cfg.test_frac, seed);

    // Partition only the training portion; the test set stays on the server.
    Dataset train_view; // shallow indices into ds via shard translation
    PartitionSpec pspec = cfg.partition;
    pspec.seed = seed;
    // Partition over a dataset restricted to train_idx: remap indices after.
    Dataset train_ds;
    train_ds.header = ds.header;
    train_ds.users.reserve(train_idx.size());
    for (int idx : train_idx) train_ds.users.push_back(ds.users[static_cast<size_t>(idx)]);
    Partition part = dirichlet_partition(train_ds, pspec);
    std::vector<std::vector<int>> shards(part.shards.size());
    for (size_t k = 0; k < part.shards.size(); ++k)
        for (int local : part.shards[k])
            shards[k].push_back(train_idx[static_cast<size_t>(local)]);

    ClientModels models = build_models(cfg, ds.header);
    ServerState server = make_server(models, seed);

    std::vector<ClientState> clients;
    clients.reserve(shards.size());
    for (size_t k = 0; k < shards.size(); ++k)
        clients.push_back(make_client(static_cast<int>(k), &ds, shards[k], models,
                                      server.global_extractor, server.global_disc, seed));

    RunContext ctx;
    ctx.dataset = &ds;
    ctx.test_idx = test_idx;
    ctx.train.steps = cfg.local_steps;
    ctx.train.batch = cfg.batch;
    ctx.train.lr = cfg.lr;
    ctx.train.weights = cfg.effective_weights();
    ctx.selection.fraction = cfg.select_fraction;
    ctx.selection.seed = seed;
    ctx.distill = cfg.distill;
    ctx.distill.steps = cfg.distill_steps();
    ctx.global_seed = seed;
    ctx.parallel_clients = cfg.parallel_clients;
    ctx.fedprox_rho = cfg.method == Method::fedprox ? cfg.fedprox_rho : 0.0;

    std::ofstream csv(run_dir / "metrics.csv");
    check(csv.good(), "cannot open metrics.csv under " + run_dir.string());
    csv << "round,accuracy,mean_loss,participants\n";
    csv.flush();

    RunResult result;
    result.seed = seed;
    result.config_hash = cfg.hash();

    for (int t = 0; t < cfg.rounds; ++t) {
        RoundReport report;
        switch (cfg.method) {
            case Method::fedack:
            case Method::fedack_a:
                report = run_round(server, clients, ctx);
                break;
            case Method::fedavg:
                report = baseline_round(server, clients, Strategy::fedavg, ctx);
                break;
            case Method::fedprox:
                report = baseline_round(server, clients, Strategy::fedprox, ctx);
                break;
        }
        result.accuracy_curve.push_back(report.accuracy);
        std::ostringstream parts;
        for (size_t i = 0; i < report.participants.size(); ++i) {
            if (i) parts << ";";
            parts << report.participants[i];
        }
        csv << report.round << "," << fmt_double(report.accuracy) << ","
            << fmt_double(report.mean_loss) << "," << parts.str() << "\n";
        csv.flush(); // abort keeps the partial CSV

        if (cfg.checkpoint_every_round || t + 1 == cfg.rounds)
            save_checkpoint(server, report,
                            run_dir / "checkpoints" / ("round_" + std::to_string(report.round)));
    }

    const auto client_dir = run_dir / "clients";
    std::filesystem::create_directories(client_dir);
    for (const auto& c : clients)
        save_client_extractor(c, models.extractor, seed,
                              client_dir /
                                  ("client_" + std::to_string(c.client_id) + "_extractor.json"));

    result.max_accuracy =
        *std::max_element(result.accuracy_curve.begin(), result.accuracy_curve.end());
    for (double target : cfg.targets)
        result.rounds_to_target_map.emplace_back(
            target, rounds_to_target(result.accuracy_curve, target));
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text(run_dir / "run_result.json", result.to_json());
    return result;
}

MultiRunSummary cmd_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto base = cfg.resolved_out_dir() / method_to_string(cfg.method);
    MultiRunSummary summary;
    for (std::uint64_t seed : cfg.seeds) {
        const auto run_dir = base / ("seed_" + std::to_string(seed));
        summary.runs.push_back(run_single(cfg, seed, run_dir));
    }
    double sum = 0.0;
    for (const auto& r : summary.runs) sum += r.max_accuracy;
    summary.mean_max_accuracy = sum / static_cast<double>(summary.runs.size());
    double var = 0.0;
    for (const auto& r : summary.runs) {
        const double d = r.max_accuracy - summary.mean_max_accuracy;
        var += d * d;
    }
    summary.std_max_accuracy =
        std::sqrt(var / static_cast<double>(summary.runs.size()));

    ordered_json j;
    j["method"] = method_to_string(cfg.method);
    j["mean_max_accuracy"] = summary.mean_max_accuracy;
    j["std_max_accuracy"] = summary.std_max_accuracy;
    auto seeds = ordered_json::array();
    for (const auto& r : summary.runs)
        seeds.push_back({{"seed", r.seed}, {"max_accuracy", r.max_accuracy}});
    j["runs"] = std::move(seeds);
    write_text(base / "summary.json", j.dump(2));
    return summary;
}

void cmd_export_features(const std::filesystem::path& run_dir,
                         const std::filesystem::path& csv_out) {
    const auto cfg = ExperimentConfig::from_json_file(run_dir / "effective_config.json");
    const auto client_dir = run_dir / "clients";
    check(std::filesystem::exists(client_dir),
          "export-features: no clients/ directory under " + run_dir.string() +
              " (run train first)");

    // Reconstruct the dataset and split from the stored config + seed.
    std::ifstream rr(run_dir / "run_result.json");
    check(rr.good(), "export-features: missing run_result.json under " + run_dir.string());
    const auto jr = ordered_json::parse(rr);
    const std::uint64_t seed = jr.at("seed").get<std::uint64_t>();

    Dataset ds = cfg.dataset_path ? load_jsonl(*cfg.dataset_path) : [&] {
        SynthSpec spec = cfg.synth;
        spec.seed = seed;
        return synth_dataset(spec);
    }();
    auto [train_idx, test_idx] = stratified_split(ds, cfg.test_frac, seed);
    (void)train_idx;

    std::ofstream csv(csv_out);
    check(csv.good(), "export-features: cannot open " + csv_out.string());
    csv << "client_id,user_id,f1,f2,label\n";

    int n_clients = 0;
    for (int k = 0;; ++k) {
        const auto path = client_dir / ("client_" + std::to_string(k) + "_extractor.json");
        if (!std::filesystem::exists(path)) break;
        std::ifstream in(path);
        check(in.good(), "export-features: cannot open " + path.string());
        const auto j = ordered_json::parse(in);
        ExtractorConfig ecfg;
        ecfg.prop_dim = j.at("config").at("prop_dim").get<int>();
        ecfg.tweet_embed_dim = j.at("config").at("tweet_embed_dim").get<int>();
        ecfg.hidden_dim = j.at("config").at("hidden_dim").get<int>();
        ecfg.feature_dim = j.at("config").at("feature_dim").get<int>();
        ecfg.attention_dim = j.at("config").at("attention_dim").get<int>();
        check(ecfg.feature_dim == 2,
              "export-features: extractor feature_dim is " +
                  std::to_string(ecfg.feature_dim) +
                  "; rerun training with model.feature_dim = 2 to export planar features");
        ParamSet params = ParamSet::from_json(j.at("params").dump());

        for (int idx : test_idx) {
            const UserRecord& u = ds.users[static_cast<size_t>(idx)];
            Representation rep = extractor_forward(params, u, ecfg);
            csv << k << "," << u.id << "," << fmt_double(rep.values[0]) << ","
                << fmt_double(rep.values[1]) << "," << u.label << "\n";
        }
        ++n_clients;
    }
    check(n_clients > 0, "export-features: no client extractors found");
    check(csv.good(), "export-features: write failed");
}

double feature_consistency_score(const std::filesystem::path& features_csv) {
    std::ifstream in(features_csv);
    check(in.good(), "score-consistency: cannot open " + features_csv.string());
    std::string line;
    check(static_cast<bool>(std::getline(in, line)), "score-consistency: empty file");
    check(line == "client_id,user_id,f1,f2,label",
          "score-consistency: unexpected header '" + line + "'");

    // (client, label) -> accumulated feature mean
    std::map<std::pair<int, int>, std::pair<std::vector<double>, int>> acc;
    int max_client = -1;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        check(fields.size() == 5, "score-consistency: bad row at line " +
                                      std::to_string(line_no));
        const int client = std::stoi(fields[0]);
        const double f1 = std::stod(fields[2]);
        const double f2 = std::stod(fields[3]);
        const int label = std::stoi(fields[4]);
        auto& slot = acc[{client, label}];
        if (slot.first.empty()) slot.first.assign(2, 0.0);
        slot.first[0] += f1;
        slot.first[1] += f2;
        slot.second += 1;
        max_client = std::max(max_client, client);
    }
    check(max_client >= 1, "score-consistency: need at least 2 clients");

    double total = 0.0;
    int n_classes = 0;
    for (int y = 0; y < 2; ++y) {
        double class_sum = 0.0;
        int n_pairs = 0;
        for (int a = 0; a <= max_client; ++a) {
            auto ita = acc.find({a, y});
            if (ita == acc.end()) continue;
            for (int b = a + 1; b <= max_client; ++b) {
                auto itb = acc.find({b, y});
                if (itb == acc.end()) continue; // class missing: pair skipped
                const auto& va = ita->second;
                const auto& vb = itb->second;
                const double ax = va.first[0] / va.second, ay = va.first[1] / va.second;
                const double bx = vb.first[0] / vb.second, by = vb.first[1] / vb.second;
                const double na = std::sqrt(ax * ax + ay * ay);
                const double nb = std::sqrt(bx * bx + by * by);
                const double cosab =
                    (na < 1e-30 || nb < 1e-30) ? 0.0 : (ax * bx + ay * by) / (na * nb);
                class_sum += cosab;
                ++n_pairs;
            }
        }
        if (n_pairs > 0) {
            total += class_sum / n_pairs;
            ++n_classes;
        }
    }
    check(n_classes > 0, "score-consistency: no comparable class pairs");
    return total / n_classes;
}

SweepResult cmd_sweep(const ExperimentConfig& base, const std::string& param,
                      const std::vector<double>& values,
                      const std::filesystem::path& sweep_dir) {
    check(!values.empty(), "sweep: empty grid");
    check(param == "gamma" || param == "mu" || param == "tau" || param == "alpha",
          "sweep: unknown parameter '" + param + "' (expected gamma|mu|tau|alpha)");
    std::filesystem::create_directories(sweep_dir);

    SweepResult result;
    result.param = param;
    result.values = values;
    for (double v : values) {
        ExperimentConfig cfg = base;
        if (param == "gamma") cfg.weights.gamma = v;
        else if (param == "mu") cfg.weights.mu = v;
        else if (param == "tau") cfg.weights.tau = v;
        else cfg.partition.concentration = v;
        for (std::uint64_t seed : base.seeds) {
            const auto run_dir =
                sweep_dir / (param + "_" + fmt_double(v)) / ("seed_" + std::to_string(seed));
            RunResult r = run_single(cfg, seed, run_dir);
            result.runs.emplace_back(v, seed, r.max_accuracy);
        }
    }

    std::ofstream runs_csv(sweep_dir / "sweep_runs.csv");
    check(runs_csv.good(), "sweep: cannot open sweep_runs.csv");
    runs_csv << "param,value,seed,max_accuracy\n";
    for (const auto& [v, seed, acc] : result.runs)
        runs_csv << param << "," << fmt_double(v) << "," << seed << "," << fmt_double(acc)
                 << "\n";

    std::ofstream summary_csv(sweep_dir / "sweep_summary.csv");
    check(summary_csv.good(), "sweep: cannot open sweep_summary.csv");
    summary_csv << "param,value,mean_max_accuracy,std_max_accuracy\n";
    for (double v : values) {
        std::vector<double> accs;
        for (const auto& [rv, seed, acc] : result.runs)
            if (rv == v) accs.push_back(acc);
        double mean = 0.0;
        for (double a : accs) mean += a;
        mean /= static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        const double stddev = std::sqrt(var / static_cast<double>(accs.size()));
        summary_csv << param << "," << fmt_double(v) << "," << fmt_double(mean) << ","
                    << fmt_double(stddev) << "\n";
    }
    return result;
}

} // namespace fedack
