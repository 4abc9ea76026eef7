#include "fedack/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"

#include "fedack/common.hpp"
#include "fedack/rng.hpp"

namespace fedack {

void Dataset::validate() const {
    std::set<std::string> ids;
    for (const auto& u : users) {
        check(ids.insert(u.id).second, "Dataset: duplicate user id '" + u.id + "'");
        check(u.label == 0 || u.label == 1, "Dataset: user '" + u.id + "' has non-binary label");
        check(static_cast<int>(u.props.size()) == header.prop_dim,
              "Dataset: user '" + u.id + "' has " + std::to_string(u.props.size()) +
                  " props, header says " + std::to_string(header.prop_dim));
        for (const auto& tw : u.tweets)
            check(tw.rank() == 2 && tw.cols() == header.embed_dim,
                  "Dataset: user '" + u.id + "' has a tweet with embed dim " +
                      std::to_string(tw.cols()) + ", header says " +
                      std::to_string(header.embed_dim));
    }
}

std::int64_t LabelStats::total() const {
    std::int64_t n = 0;
    for (const auto& c : counts) n += c[0] + c[1];
    return n;
}

std::int64_t LabelStats::label_total(int y) const {
    std::int64_t n = 0;
    for (const auto& c : counts) n += c[static_cast<size_t>(y)];
    return n;
}

double LabelStats::p_y(int y) const {
    const std::int64_t n = total();
    return n == 0 ? 0.0 : static_cast<double>(label_total(y)) / static_cast<double>(n);
}

double LabelStats::alpha(int k, int y) const {
    const std::int64_t n = label_total(y);
    if (n == 0) return 0.0;
    return static_cast<double>(counts[static_cast<size_t>(k)][static_cast<size_t>(y)]) /
           static_cast<double>(n);
}

namespace {

std::vector<double> random_unit_dir(int d, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(d));
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (auto& x : v) x /= norm;
    return v;
}

} // namespace

Dataset synth_dataset(const SynthSpec& spec) {
    check(spec.n_users >= 2, "synth_dataset: need at least 2 users");
    check(spec.class_sep >= 0.0, "synth_dataset: class_sep must be >= 0");
    check(spec.prop_dim >= 1 && spec.embed_dim >= 1, "synth_dataset: dims must be positive");
    check(spec.tweets_min >= 0 && spec.tweets_max >= spec.tweets_min,
          "synth_dataset: bad tweets range");
    check(spec.tokens_min >= 1 && spec.tokens_max >= spec.tokens_min,
          "synth_dataset: bad tokens range");

    Rng rng = Rng::derive(spec.seed, 0x5941u);
    const auto mu = random_unit_dir(spec.prop_dim, rng);
    const auto nu = random_unit_dir(spec.embed_dim, rng);

    Dataset ds;
    ds.header = {spec.prop_dim, spec.embed_dim, 2};
    ds.users.reserve(static_cast<size_t>(spec.n_users));
    for (int i = 0; i < spec.n_users; ++i) {
        UserRecord u;
        u.id = "u" + std::to_string(i);
        u.label = i % 2; // balanced within one
        const double sign = u.label == 1 ? 1.0 : -1.0;
        u.props.resize(static_cast<size_t>(spec.prop_dim));
        for (int j = 0; j < spec.prop_dim; ++j)
            u.props[static_cast<size_t>(j)] =
                sign * spec.class_sep * mu[static_cast<size_t>(j)] + rng.normal();
        const int n_tweets =
            spec.tweets_min + rng.uniform_int(spec.tweets_max - spec.tweets_min + 1);
        u.tweets.reserve(static_cast<size_t>(n_tweets));
        for (int tw = 0; tw < n_tweets; ++tw) {
            const int q =
                spec.tokens_min + rng.uniform_int(spec.tokens_max - spec.tokens_min + 1);
            Tensor tok({q, spec.embed_dim});
            for (int r = 0; r < q; ++r)
                for (int c = 0; c < spec.embed_dim; ++c)
                    tok.at(r, c) =
                        sign * spec.class_sep * nu[static_cast<size_t>(c)] + rng.normal();
            u.tweets.push_back(std::move(tok));
        }
        ds.users.push_back(std::move(u));
    }
    return ds;
}

Partition dirichlet_partition(const Dataset& ds, const PartitionSpec& spec) {
    check(!ds.users.empty(), "dirichlet_partition: dataset is empty");
    check(spec.n_clients >= 1, "dirichlet_partition: need at least one client");
    check(spec.concentration > 0.0, "dirichlet_partition: concentration must be > 0");
    if (spec.n_clients > static_cast<int>(ds.users.size()))
        warn("dirichlet_partition: more clients than users; some shards will be empty");

    Rng rng = Rng::derive(spec.seed, 0xD112u);
    const int K = spec.n_clients;
    Partition part;
    part.spec = spec;
    part.shards.assign(static_cast<size_t>(K), {});

    for (int y = 0; y < 2; ++y) {
        std::vector<int> members;
        for (size_t i = 0; i < ds.users.size(); ++i)
            if (ds.users[i].label == y) members.push_back(static_cast<int>(i));
        if (members.empty()) continue;
        rng.shuffle(members);
        const auto props = rng.dirichlet(spec.concentration, K);

        // Largest-remainder rounding keeps the assignment exhaustive.
        const int n = static_cast<int>(members.size());
        std::vector<int> take(static_cast<size_t>(K));
        std::vector<std::pair<double, int>> rem(static_cast<size_t>(K));
        int assigned = 0;
        for (int k = 0; k < K; ++k) {
            const double exact = props[static_cast<size_t>(k)] * n;
            take[static_cast<size_t>(k)] = static_cast<int>(std::floor(exact));
            assigned += take[static_cast<size_t>(k)];
            rem[static_cast<size_t>(k)] = {exact - std::floor(exact), k};
        }
        std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (int r = 0; r < n - assigned; ++r)
            take[static_cast<size_t>(rem[static_cast<size_t>(r)].second)] += 1;

        int pos = 0;
        for (int k = 0; k < K; ++k)
            for (int c = 0; c < take[static_cast<size_t>(k)]; ++c)
                part.shards[static_cast<size_t>(k)].push_back(members[static_cast<size_t>(pos++)]);
    }
    for (auto& shard : part.shards) std::sort(shard.begin(), shard.end());
    return part;
}

LabelStats label_counts(const Dataset& ds, const std::vector<std::vector<int>>& shards) {
    LabelStats stats;
    stats.counts.assign(shards.size(), {0, 0});
    for (size_t k = 0; k < shards.size(); ++k)
        for (int idx : shards[k]) {
            check(idx >= 0 && idx < static_cast<int>(ds.users.size()),
                  "label_counts: index out of range");
            stats.counts[k][static_cast<size_t>(ds.users[static_cast<size_t>(idx)].label)] += 1;
        }
    return stats;
}

std::pair<std::vector<int>, std::vector<int>>
stratified_split(const Dataset& ds, double test_frac, std::uint64_t seed) {
    check(test_frac >= 0.0 && test_frac < 1.0, "stratified_split: bad test fraction");
    Rng rng = Rng::derive(seed, 0x5711u); // stream tag
    std::vector<int> train, test;
    for (int y = 0; y < 2; ++y) {
        std::vector<int> members;
        for (size_t i = 0; i < ds.users.size(); ++i)
            if (ds.users[i].label == y) members.push_back(static_cast<int>(i));
        rng.shuffle(members);
        const int n_test = static_cast<int>(std::llround(test_frac * members.size()));
        for (size_t i = 0; i < members.size(); ++i)
            (static_cast<int>(i) < n_test ? test : train).push_back(members[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

// ---- serialization ----------------------------------------------------------

namespace {

nlohmann::ordered_json user_to_json(const UserRecord& u) {
    nlohmann::ordered_json j;
    j["id"] = u.id;
    j["label"] = u.label;
    j["props"] = u.props;
    auto tweets = nlohmann::ordered_json::array();
    for (const auto& tw : u.tweets) {
        auto m = nlohmann::ordered_json::array();
        for (int r = 0; r < tw.rows(); ++r) {
            auto rowj = nlohmann::ordered_json::array();
            for (int c = 0; c < tw.cols(); ++c) rowj.push_back(tw.at(r, c));
            m.push_back(std::move(rowj));
        }
        tweets.push_back(std::move(m));
    }
    j["tweets"] = std::move(tweets);
    return j;
}

UserRecord user_from_json(const nlohmann::ordered_json& j, const DatasetHeader& header) {
    UserRecord u;
    u.id = j.at("id").get<std::string>();
    u.label = j.at("label").get<int>();
    check(u.label == 0 || u.label == 1, "user '" + u.id + "': label must be 0 or 1");
    u.props = j.at("props").get<std::vector<double>>();
    check(static_cast<int>(u.props.size()) == header.prop_dim,
          "user '" + u.id + "': prop dim " + std::to_string(u.props.size()) +
              " does not match header " + std::to_string(header.prop_dim));
    for (const auto& m : j.at("tweets")) {
        const int q = static_cast<int>(m.size());
        check(q >= 1, "user '" + u.id + "': empty tweet matrix");
        Tensor tok({q, header.embed_dim});
        for (int r = 0; r < q; ++r) {
            const auto& rowj = m.at(static_cast<size_t>(r));
            check(static_cast<int>(rowj.size()) == header.embed_dim,
                  "user '" + u.id + "': token dim " + std::to_string(rowj.size()) +
                      " does not match header " + std::to_string(header.embed_dim));
            for (int c = 0; c < header.embed_dim; ++c)
                tok.at(r, c) = rowj.at(static_cast<size_t>(c)).get<double>();
        }
        u.tweets.push_back(std::move(tok));
    }
    return u;
}

} // namespace

Dataset load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    check(in.good(), "load_jsonl: cannot open " + path.string());
    std::string line;
    int line_no = 0;
    Dataset ds;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const std::exception& e) {
            fail("load_jsonl: " + path.string() + ":" + std::to_string(line_no) +
                 ": malformed JSON (" + e.what() + ")");
        }
        try {
            if (!have_header) {
                ds.header.prop_dim = j.at("p_dim").get<int>();
                ds.header.embed_dim = j.at("embed_dim").get<int>();
                ds.header.classes = j.value("classes", 2);
                check(ds.header.classes == 2, "load_jsonl: only 2-class datasets supported");
                have_header = true;
            } else {
                ds.users.push_back(user_from_json(j, ds.header));
            }
        } catch (const std::exception& e) {
            fail("load_jsonl: " + path.string() + ":" + std::to_string(line_no) + ": " +
                 e.what());
        }
    }
    check(have_header, "load_jsonl: " + path.string() + ": missing header line");
    ds.validate();
    return ds;
}

void save_jsonl(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    check(out.good(), "save_jsonl: cannot open " + path.string());
    nlohmann::ordered_json header;
    header["p_dim"] = ds.header.prop_dim;
    header["embed_dim"] = ds.header.embed_dim;
    header["classes"] = ds.header.classes;
    out << header.dump() << "\n";
    for (const auto& u : ds.users) out << user_to_json(u).dump() << "\n";
    check(out.good(), "save_jsonl: write failed for " + path.string());
}

void save_partition(const Partition& part, const Dataset& ds,
                    const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["spec"] = {{"concentration", part.spec.concentration},
                 {"clients", part.spec.n_clients},
                 {"seed", part.spec.seed}};
    auto shards = nlohmann::ordered_json::array();
    for (const auto& shard : part.shards) {
        auto ids = nlohmann::ordered_json::array();
        for (int idx : shard) ids.push_back(ds.users[static_cast<size_t>(idx)].id);
        shards.push_back(std::move(ids));
    }
    j["shards"] = std::move(shards);
    std::ofstream out(path);
    check(out.good(), "save_partition: cannot open " + path.string());
    out << j.dump(2) << "\n";
    check(out.good(), "save_partition: write failed for " + path.string());
}

Partition load_partition(const Dataset& ds, const std::filesystem::path& path) {
    std::ifstream in(path);
    check(in.good(), "load_partition: cannot open " + path.string());
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const std::exception& e) {
        fail("load_partition: " + path.string() + ": " + e.what());
    }
    Partition part;
    part.spec.concentration = j.at("spec").at("concentration").get<double>();
    part.spec.n_clients = j.at("spec").at("clients").get<int>();
    part.spec.seed = j.at("spec").at("seed").get<std::uint64_t>();

    std::map<std::string, int> by_id;
    for (size_t i = 0; i < ds.users.size(); ++i)
        by_id[ds.users[i].id] = static_cast<int>(i);
    for (const auto& shard : j.at("shards")) {
        std::vector<int> s;
        for (const auto& id : shard) {
            auto it = by_id.find(id.get<std::string>());
            check(it != by_id.end(),
                  "load_partition: unknown user id '" + id.get<std::string>() + "'");
            s.push_back(it->second);
        }
        part.shards.push_back(std::move(s));
    }
    check(static_cast<int>(part.shards.size()) == part.spec.n_clients,
          "load_partition: shard count does not match spec");
    return part;
}

} // namespace fedack
