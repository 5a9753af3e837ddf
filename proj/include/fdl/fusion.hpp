#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fdl/data.hpp"
#include "fdl/nn.hpp"

namespace fdl {

enum class FusionMethod {
    ConcatFusion,
    AdditionFusion,
    TrainableFusion,
    PoolingApproach,
    HardVote,
    SoftVote,
    Stacking,
};

std::string to_string(FusionMethod m);
FusionMethod fusion_method_from_string(const std::string& s);
/// All seven selectable method names.
const std::vector<std::string>& fusion_method_names();
/// Voting methods need no trained head.
bool method_needs_head(FusionMethod m);

enum class HeadKind { GapThenDense, FlattenThenDense };
std::string to_string(HeadKind k);
HeadKind head_kind_from_string(const std::string& s);

struct FusionSpec {
    FusionMethod method = FusionMethod::ConcatFusion;
    HeadKind head = HeadKind::GapThenDense;
    int head_epochs = 30;
    double head_lr = 1e-2;
    int head_batch = 32;
    int eval_limit = 0;  // cap on validation images used for head selection; 0 = all
};

/// Combines the last-conv maps of the m base models (value-level, no graph):
/// concat/trainable -> [h,w,sum d]; addition -> pointwise sum (equal d
/// required); pooling -> GAP descriptors concatenated into [1,1,sum d].
Tensor fuse_features(std::span<const Tensor> last_convs, FusionMethod method);

/// A trained ensemble: frozen bases plus (for non-voting methods) the head.
struct EnsembleModel {
    std::vector<LayerGraph> bases;
    FusionSpec spec;
    std::optional<LayerGraph> head;
    int n_classes = 0;
};

/// Trains the classifier head on frozen bases (their parameters are never
/// touched; features are extracted once and cached). Heads train with CE on
/// the train split and keep the best epoch by validation accuracy; the
/// stacking meta-learner trains on the validation split instead, so it never
/// sees training-fit probabilities. Voting methods return immediately.
EnsembleModel train_head(std::vector<LayerGraph> bases, const FusionSpec& spec,
                         const Dataset& dataset, std::uint64_t seed,
                         std::ostream* log = nullptr);

/// Shape of the head input for the given method (from the bases' tap shapes).
Shape head_input_shape(const std::vector<LayerGraph>& bases, FusionMethod method);

/// Fresh head structure (used by train_head and by checkpoint reload).
LayerGraph make_head(const Shape& input_shape, const FusionSpec& spec, int single_depth,
                     int n_classes, std::uint64_t seed);

struct Prediction {
    int cls = 0;
    std::vector<double> probs;
};

/// Pure function of (frozen base params, head params, image).
Prediction predict(const EnsembleModel& ensemble, const Tensor& image);

struct EvalReport {
    double overall = 0.0;
    std::vector<double> per_class;   // accuracy per class over the split
    std::vector<int> class_counts;
};

EvalReport evaluate_ensemble(const EnsembleModel& ensemble, const Dataset& ds,
                             const std::vector<int>& idx);

}  // namespace fdl
