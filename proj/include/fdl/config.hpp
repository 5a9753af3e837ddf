#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fdl/fusion.hpp"
#include "fdl/trainer.hpp"

namespace fdl {

/// Flat key=value text files ('#' comments, blank lines ignored).
std::map<std::string, std::string> read_kv_file(const std::string& path);
void write_kv_file(const std::vector<std::pair<std::string, std::string>>& entries,
                   const std::string& path);

/// FNV-1a 64-bit over a string, hex-encoded (config identity, not security).
std::string fnv1a_hex(const std::string& text);

/// The serialized run configuration: every documented key with its default.
/// Unknown keys are rejected; the fully resolved form (defaults applied) is
/// echoed into the output directory and hashed into the manifest.
struct RunConfig {
    // dataset
    std::string dataset = "two_patch";  // two_patch | cifar10 | ppm_dir
    std::string dataset_dir;            // required for cifar10 / ppm_dir
    std::uint64_t split_seed = 0;
    int k_per_class = 0;  // 0 = full train split
    int two_patch_n = 250;
    int two_patch_size = 16;
    // architecture
    std::string arch = "vgg_like";
    int width_num = 1;
    int width_den = 1;
    // ensemble
    int m = 5;
    std::string init_strategy = "different";
    std::vector<std::uint64_t> init_seeds;  // empty = strategy default
    // distance loss
    std::string distance_kind = "cosine_plus_euclidean";
    double alpha = 1.0;
    double beta = 10.0;
    double epsilon = 1e-8;
    bool distance_enabled = true;
    // training
    int epochs = 30;
    double learning_rate = 1e-4;
    int batch_size = 32;
    std::string optimizer = "adam";
    std::vector<std::string> augmentation = {"rotation", "hflip", "vflip", "laplace_noise",
                                             "translation"};
    std::uint64_t rng_seed = 0;
    int eval_limit = 0;
    int workers = 1;
    // fusion
    std::string fusion_method = "concat_fusion";
    std::string head = "gap_then_dense";
    int head_epochs = 30;
    double head_lr = 1e-2;
    int head_batch = 32;
    // output
    std::string out_dir = "run_out";

    static RunConfig load(const std::string& path);
    /// Canonical resolved text, one key=value per line in documented order.
    std::string resolved_text() const;
    std::string config_hash() const { return fnv1a_hex(resolved_text()); }

    /// Loads the configured dataset (applies k_per_class subsampling).
    Dataset load_dataset() const;
    /// Ensemble configuration with the architecture sized to the dataset.
    EnsembleConfig ensemble_config(const Dataset& ds) const;
    FusionSpec fusion_spec() const;
};

/// Manifest written by `train`: the m checkpoint files, the config hash and
/// echo, and the best epoch. Paths are relative to the manifest directory.
struct TrainManifest {
    int m = 0;
    std::vector<std::string> model_files;
    std::string config_hash;
    int best_epoch = 0;
    std::string config_file = "config.resolved";

    void save(const std::string& path) const;
    static TrainManifest load(const std::string& path);
};

/// Manifest written by `fuse`/`eval` for head-bearing methods.
struct FusionManifest {
    std::string method;
    std::string head_kind;
    std::string head_file;  // empty for voting methods
    std::string base_manifest;

    void save(const std::string& path) const;
    static FusionManifest load(const std::string& path);
};

}  // namespace fdl
