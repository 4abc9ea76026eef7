#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedack/tensor.hpp"

namespace fedack {

// One social account: metadata property vector plus per-tweet token-embedding
// matrices. label 0 = human, 1 = bot.
struct UserRecord {
    std::string id;
    int label = 0;
    std::vector<double> props;
    std::vector<Tensor> tweets; // each {Q_j, d}
};

struct DatasetHeader {
    int prop_dim = 0;
    int embed_dim = 0;
    int classes = 2;
};

struct Dataset {
    DatasetHeader header;
    std::vector<UserRecord> users;

    void validate() const; // unique ids, dims match header, labels binary
};

struct PartitionSpec {
    double concentration = 0.5; // Dirichlet concentration
    int n_clients = 10;
    std::uint64_t seed = 0;
};

struct Partition {
    PartitionSpec spec;
    std::vector<std::vector<int>> shards; // indices into Dataset::users
};

// Per-client per-label sample counts with the derived ratios used by the
// global-generator distillation.
struct LabelStats {
    std::vector<std::array<std::int64_t, 2>> counts; // counts[k][y]

    int n_clients() const { return static_cast<int>(counts.size()); }
    std::int64_t total() const;
    std::int64_t label_total(int y) const;
    double p_y(int y) const;          // global label frequency
    double alpha(int k, int y) const; // client share of label y; 0 when label absent
};

struct SynthSpec {
    int n_users = 2000;
    int prop_dim = 8;
    int embed_dim = 16;
    int tweets_min = 2;
    int tweets_max = 6;
    int tokens_min = 3;
    int tokens_max = 8;
    double class_sep = 2.0;
    std::uint64_t seed = 0;
};

// Two-class synthetic account population. Per class, props ~ N(+/-sep*mu, I)
// and tweet tokens ~ N(+/-sep*nu, I) for fixed random unit directions mu, nu;
// labels balanced within one.
Dataset synth_dataset(const SynthSpec& spec);

// Per class, client proportions ~ Dir(concentration * 1_K), converted to
// integer counts by largest-remainder rounding. Shards are disjoint and
// jointly exhaustive. K > n_users only warns; empty shards are legal.
Partition dirichlet_partition(const Dataset& ds, const PartitionSpec& spec);

LabelStats label_counts(const Dataset& ds, const std::vector<std::vector<int>>& shards);

// Stratified split; returns (train indices, test indices).
std::pair<std::vector<int>, std::vector<int>>
stratified_split(const Dataset& ds, double test_frac, std::uint64_t seed);

// JSONL: first line is the header object, then one user per line.
Dataset load_jsonl(const std::filesystem::path& path);
void save_jsonl(const Dataset& ds, const std::filesystem::path& path);

// Partition file: {"spec": {...}, "shards": [[user ids...], ...]}.
void save_partition(const Partition& part, const Dataset& ds,
                    const std::filesystem::path& path);
Partition load_partition(const Dataset& ds, const std::filesystem::path& path);

} // namespace fedack
