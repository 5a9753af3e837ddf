#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <vector>

#include "fdl/data.hpp"
#include "fdl/distance.hpp"
#include "fdl/nn.hpp"
#include "fdl/rng.hpp"

namespace fdl {

enum class InitStrategy { None, Same, Different };
enum class OptimizerKind { Adam, Sgd };
enum class AugKind { Rotation, HFlip, VFlip, LaplaceNoise, Translation };

std::string to_string(InitStrategy s);
InitStrategy init_strategy_from_string(const std::string& s);
std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);
std::string to_string(AugKind k);
AugKind aug_kind_from_string(const std::string& s);

struct AugmentationSpec {
    std::set<AugKind> enabled;
    double rotation_deg = 15.0;
    double flip_p = 0.5;
    double laplace_scale = 0.02;
    double translation_frac = 0.10;
};

struct EnsembleConfig {
    int m = 5;
    ArchSpec arch;
    InitStrategy init_strategy = InitStrategy::Different;
    std::vector<std::uint64_t> init_seeds;  // filled by validate() when empty
    DistanceSpec distance;
    bool distance_enabled = true;
    int epochs = 1;
    double learning_rate = 1e-4;
    int batch_size = 32;
    OptimizerKind optimizer = OptimizerKind::Adam;
    AugmentationSpec augmentation;
    std::uint64_t rng_seed = 0;
    int workers = 1;
    int eval_limit = 0;  // cap on per-epoch validation images; 0 = all

    /// Checks invariants and resolves default init seeds (1..m).
    void validate();
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    std::vector<double> ce;          // per-model mean CE over the epoch
    double distance_loss = 0.0;      // epoch mean of the ensemble distance term
    std::vector<double> pairwise;    // m*m epoch-mean pair matrix, row-major
    std::vector<double> val_acc;
    double val_acc_mean = 0.0;
};

struct RunRecord {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;  // 1-based; first epoch attaining the max mean val accuracy
    double best_val_acc_mean = 0.0;
    double wall_time_s = 0.0;  // kept out of the metrics log

    bool operator==(const RunRecord& other) const;
};

struct Batch {
    std::vector<Tensor> images;
    std::vector<int> labels;
};

Tensor make_onehot(int n_classes, int label);

// --- augmentation ---
Tensor hflip_image(const Tensor& image);
Tensor vflip_image(const Tensor& image);
Tensor rotate_image(const Tensor& image, double degrees);          // bilinear, zero fill
Tensor translate_image(const Tensor& image, double dy, double dx); // bilinear, zero fill

/// Applies each enabled transform independently, in the fixed order
/// rotation, hflip, vflip, laplace noise, translation. The number of RNG
/// draws per transform does not depend on the sampled values.
Tensor augment(const Tensor& image, Rng& rng, const AugmentationSpec& spec);

/// Per-model parameter updater. Adam uses the standard constants
/// (0.9, 0.999, 1e-8); a zero gradient leaves parameters unchanged at any t.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr, std::vector<Tensor> params);
    void zero_grad();
    void step();

private:
    OptimizerKind kind_;
    double lr_;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

/// Builds the m base models per the configured initialization strategy.
std::vector<LayerGraph> init_models(const EnsembleConfig& config);

/// Joint training objective on one batch, recorded on a single graph:
/// sum_i mean-CE(model_i) + mean_b sum_{i<j} pair_loss(rep_ib, rep_jb).
/// With distance_enabled == false the second term is exactly zero.
Tensor joint_loss(Graph& g, const std::vector<LayerGraph>& models, const Batch& batch,
                  const EnsembleConfig& config);

/// Argmax class (ties -> lowest index).
int predict_class(const LayerGraph& model, const Tensor& image);

/// Fraction correct over idx (first `limit` entries when limit > 0).
double accuracy(const LayerGraph& model, const Dataset& ds, const std::vector<int>& idx,
                int limit = 0);

struct TrainResult {
    std::vector<LayerGraph> best_models;   // parameters of the best epoch
    std::vector<LayerGraph> final_models;  // parameters after the last step
    RunRecord record;
};

/// Joint training per the configured schedule. Deterministic given rng_seed
/// with workers == 1; per-model work may run on `workers` threads, with all
/// cross-model reductions in model-index order so results do not depend on
/// scheduling. Writes one structured-text line per epoch to `metrics` when
/// given. Throws StateError with epoch/batch/term diagnostics if the loss
/// goes non-finite.
TrainResult train(const EnsembleConfig& config, const Dataset& dataset,
                  std::ostream* metrics = nullptr);

/// One metrics line: epoch=.. ce<i>=.. dloss=.. d<i>_<j>=.. acc<i>=..
/// acc_mean=.. best_epoch=..
std::string format_metrics_line(const EpochRecord& rec, int m, int best_epoch);

}  // namespace fdl
