#include "fdl/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "fdl/rng.hpp"
#include "fdl/trainer.hpp"

namespace fdl {

std::string to_string(FusionMethod m) {
    switch (m) {
        case FusionMethod::ConcatFusion: return "concat_fusion";
        case FusionMethod::AdditionFusion: return "addition_fusion";
        case FusionMethod::TrainableFusion: return "trainable_fusion";
        case FusionMethod::PoolingApproach: return "pooling_approach";
        case FusionMethod::HardVote: return "hard_vote";
        case FusionMethod::SoftVote: return "soft_vote";
        case FusionMethod::Stacking: return "stacking";
    }
    return "?";
}

const std::vector<std::string>& fusion_method_names() {
    static const std::vector<std::string> names = {
        "concat_fusion", "addition_fusion", "trainable_fusion", "pooling_approach",
        "hard_vote",     "soft_vote",       "stacking"};
    return names;
}

FusionMethod fusion_method_from_string(const std::string& s) {
    const auto& names = fusion_method_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == s) return static_cast<FusionMethod>(i);
    std::string all;
    for (const auto& n : names) all += (all.empty() ? "" : ", ") + n;
    throw ConfigError("unknown ensemble method '" + s + "'; expected one of: " + all);
}

bool method_needs_head(FusionMethod m) {
    return m != FusionMethod::HardVote && m != FusionMethod::SoftVote;
}

std::string to_string(HeadKind k) {
    return k == HeadKind::GapThenDense ? "gap_then_dense" : "flatten_then_dense";
}

HeadKind head_kind_from_string(const std::string& s) {
    if (s == "gap_then_dense") return HeadKind::GapThenDense;
    if (s == "flatten_then_dense") return HeadKind::FlattenThenDense;
    throw ConfigError("unknown head kind: " + s);
}

// ---------------------------------------------------------------------------
// feature fusion
// ---------------------------------------------------------------------------

Tensor fuse_features(std::span<const Tensor> last_convs, FusionMethod method) {
    if (last_convs.empty()) throw ConfigError("fuse_features: no inputs");
    int h = last_convs[0].extent(0), w = last_convs[0].extent(1);
    for (const auto& t : last_convs) {
        if (t.rank() != 3) throw DimensionError("fuse_features expects rank-3 feature maps");
        if (t.extent(0) != h || t.extent(1) != w)
            throw DimensionError("fuse_features: spatial extents differ across models");
    }
    switch (method) {
        case FusionMethod::ConcatFusion:
        case FusionMethod::TrainableFusion: {
            int total_d = 0;
            for (const auto& t : last_convs) total_d += t.extent(2);
            Tensor out({h, w, total_d});
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    std::size_t base = (static_cast<std::size_t>(y) * w + x) * static_cast<std::size_t>(total_d);
                    std::size_t off = 0;
                    for (const auto& t : last_convs) {
                        int d = t.extent(2);
                        const double* src =
                            t.data() + (static_cast<std::size_t>(y) * w + x) * static_cast<std::size_t>(d);
                        for (int c = 0; c < d; ++c) out[base + off + static_cast<std::size_t>(c)] = src[c];
                        off += static_cast<std::size_t>(d);
                    }
                }
            return out;
        }
        case FusionMethod::AdditionFusion: {
            int d = last_convs[0].extent(2);
            for (const auto& t : last_convs)
                if (t.extent(2) != d)
                    throw DimensionError("addition fusion requires equal channel counts");
            Tensor out = last_convs[0].clone();
            for (std::size_t i = 1; i < last_convs.size(); ++i)
                for (std::size_t k = 0; k < out.size(); ++k) out[k] += last_convs[i][k];
            return out;
        }
        case FusionMethod::PoolingApproach: {
            int total_d = 0;
            for (const auto& t : last_convs) total_d += t.extent(2);
            Tensor out({1, 1, total_d});
            std::size_t off = 0;
            double inv = 1.0 / (static_cast<double>(h) * w);
            for (const auto& t : last_convs) {
                int d = t.extent(2);
                for (int c = 0; c < d; ++c) {
                    double acc = 0.0;
                    for (int p = 0; p < h * w; ++p)
                        acc += t[static_cast<std::size_t>(p) * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
                    out[off + static_cast<std::size_t>(c)] = acc * inv;
                }
                off += static_cast<std::size_t>(d);
            }
            return out;
        }
        default:
            throw ConfigError("fuse_features: " + to_string(method) + " is not a feature-fusion method");
    }
}

// ---------------------------------------------------------------------------
// head construction and training
// ---------------------------------------------------------------------------

namespace {

Tensor softmax_values(const Tensor& logits) {
    double m = logits[0];
    for (std::size_t i = 0; i < logits.size(); ++i) m = std::max(m, logits[i]);
    Tensor p(logits.shape());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (std::size_t i = 0; i < p.size(); ++i) p[i] /= z;
    return p;
}

struct BaseOutputs {
    std::vector<Tensor> taps;    // last conv map per model
    std::vector<Tensor> probs;   // softmax per model
};

BaseOutputs run_bases(const std::vector<LayerGraph>& bases, const Tensor& image) {
    BaseOutputs out;
    for (const auto& model : bases) {
        Graph g;
        auto fw = model.forward(g, image);
        out.taps.push_back(fw.last_conv.clone());
        out.probs.push_back(softmax_values(fw.logits));
    }
    return out;
}

/// Head input for the non-voting methods; detached constants.
Tensor head_input(const std::vector<LayerGraph>& bases, const FusionSpec& spec,
                  const Tensor& image) {
    BaseOutputs out = run_bases(bases, image);
    if (spec.method == FusionMethod::Stacking) {
        int n = static_cast<int>(out.probs[0].size());
        Tensor stacked({1, 1, static_cast<int>(bases.size()) * n});
        std::size_t k = 0;
        for (const auto& p : out.probs)
            for (std::size_t i = 0; i < p.size(); ++i) stacked[k++] = p[i];
        return stacked;
    }
    return fuse_features(out.taps, spec.method);
}

double head_accuracy(const LayerGraph& head, const std::vector<Tensor>& features,
                     const std::vector<int>& labels, const std::vector<int>& idx) {
    if (idx.empty()) throw ConfigError("head evaluation over an empty split");
    std::size_t correct = 0;
    for (int i : idx) {
        Tensor logits = head.infer(features[static_cast<std::size_t>(i)]);
        int best = 0;
        for (std::size_t k = 1; k < logits.size(); ++k)
            if (logits[k] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
        if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

Shape head_input_shape(const std::vector<LayerGraph>& bases, FusionMethod method) {
    if (bases.empty()) throw ConfigError("head_input_shape: no base models");
    Shape tap = bases[0].last_conv_shape();
    int total_d = 0;
    for (const auto& b : bases) total_d += b.last_conv_shape()[2];
    switch (method) {
        case FusionMethod::ConcatFusion:
        case FusionMethod::TrainableFusion: return {tap[0], tap[1], total_d};
        case FusionMethod::AdditionFusion: return tap;
        case FusionMethod::PoolingApproach: return {1, 1, total_d};
        case FusionMethod::Stacking:
            return {1, 1, static_cast<int>(bases.size()) * bases[0].n_classes()};
        default:
            throw ConfigError("head_input_shape: voting methods have no head");
    }
}

LayerGraph make_head(const Shape& input_shape, const FusionSpec& spec, int single_depth,
                     int n_classes, std::uint64_t seed) {
    LayerGraphBuilder b(input_shape);
    if (spec.method == FusionMethod::TrainableFusion) b.conv(1, single_depth).relu();
    bool vector_input = input_shape[0] == 1 && input_shape[1] == 1;
    if (spec.head == HeadKind::GapThenDense && !vector_input)
        b.global_avg_pool();
    else
        b.flatten();
    b.dense(n_classes);
    return b.build(seed);
}

EnsembleModel train_head(std::vector<LayerGraph> bases, const FusionSpec& spec,
                         const Dataset& dataset, std::uint64_t seed, std::ostream* log) {
    if (bases.empty()) throw ConfigError("train_head: no base models");
    EnsembleModel ensemble;
    ensemble.n_classes = bases[0].n_classes();
    ensemble.spec = spec;
    ensemble.bases = std::move(bases);
    if (!method_needs_head(spec.method)) return ensemble;
    if (spec.head_epochs < 1) throw ConfigError("head_epochs must be >= 1");

    // Bases are frozen, so features are extracted once. Indexed by dataset
    // position; only train/val entries are filled.
    const std::vector<int>& fit_idx =
        spec.method == FusionMethod::Stacking ? dataset.val_idx : dataset.train_idx;
    std::vector<int> select_idx = dataset.val_idx;
    if (spec.eval_limit > 0 && static_cast<std::size_t>(spec.eval_limit) < select_idx.size())
        select_idx.resize(static_cast<std::size_t>(spec.eval_limit));
    if (fit_idx.empty()) throw ConfigError("head training split is empty");

    std::vector<Tensor> features(dataset.images.size());
    std::vector<bool> have(dataset.images.size(), false);
    auto ensure_features = [&](const std::vector<int>& idx) {
        for (int i : idx) {
            if (have[static_cast<std::size_t>(i)]) continue;
            features[static_cast<std::size_t>(i)] =
                head_input(ensemble.bases, spec, dataset.images[static_cast<std::size_t>(i)]);
            have[static_cast<std::size_t>(i)] = true;
        }
    };
    ensure_features(fit_idx);
    ensure_features(select_idx);

    Shape in_shape = features[static_cast<std::size_t>(fit_idx[0])].shape();
    int single_depth = ensemble.bases[0].last_conv_shape()[2];
    LayerGraph head =
        make_head(in_shape, spec, single_depth, ensemble.n_classes, derive_seed(seed, 0xead));
    Optimizer opt(OptimizerKind::Adam, spec.head_lr, head.param_list());
    Rng rng(derive_seed(seed, 0xeadb));

    double best_acc = -1.0;
    LayerGraph best_head = head.clone();
    for (int epoch = 1; epoch <= spec.head_epochs; ++epoch) {
        std::vector<int> order = fit_idx;
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(spec.head_batch)) {
            std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(spec.head_batch));
            Graph g;
            Tensor ce_sum;
            for (std::size_t k = start; k < stop; ++k) {
                int i = order[k];
                auto fw = head.forward(g, features[static_cast<std::size_t>(i)]);
                Tensor ce = g.softmax_cross_entropy(
                    fw.logits, make_onehot(ensemble.n_classes, dataset.labels[static_cast<std::size_t>(i)]));
                ce_sum = ce_sum.defined() ? g.add(ce_sum, ce) : ce;
            }
            Tensor ce_mean = g.mul(ce_sum, 1.0 / static_cast<double>(stop - start));
            opt.zero_grad();
            g.backward(ce_mean);
            opt.step();
        }
        // ties keep the later epoch: at equal selection accuracy the longer-
        // trained head is the better-fit snapshot
        double acc = head_accuracy(head, features, dataset.labels, select_idx);
        if (acc >= best_acc) {
            best_acc = acc;
            best_head = head.clone();
        }
        if (log) (*log) << "head epoch=" << epoch << " val_acc=" << acc << "\n";
    }
    ensemble.head = std::move(best_head);
    return ensemble;
}

// ---------------------------------------------------------------------------
// prediction
// ---------------------------------------------------------------------------

Prediction predict(const EnsembleModel& ensemble, const Tensor& image) {
    if (ensemble.bases.empty()) throw StateError("predict: ensemble has no base models");
    int n = ensemble.n_classes;
    Prediction pred;
    pred.probs.assign(static_cast<std::size_t>(n), 0.0);

    if (ensemble.spec.method == FusionMethod::HardVote ||
        ensemble.spec.method == FusionMethod::SoftVote) {
        BaseOutputs out = run_bases(ensemble.bases, image);
        if (ensemble.spec.method == FusionMethod::HardVote) {
            std::vector<int> votes(static_cast<std::size_t>(n), 0);
            for (const auto& p : out.probs) {
                int best = 0;
                for (std::size_t k = 1; k < p.size(); ++k)
                    if (p[k] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
                ++votes[static_cast<std::size_t>(best)];
            }
            int best = 0;
            for (int k = 1; k < n; ++k)
                if (votes[static_cast<std::size_t>(k)] > votes[static_cast<std::size_t>(best)]) best = k;
            pred.cls = best;  // ties keep the lowest class index
            for (int k = 0; k < n; ++k)
                pred.probs[static_cast<std::size_t>(k)] =
                    static_cast<double>(votes[static_cast<std::size_t>(k)]) /
                    static_cast<double>(ensemble.bases.size());
            return pred;
        }
        for (const auto& p : out.probs)
            for (std::size_t k = 0; k < p.size(); ++k) pred.probs[k] += p[k];
        for (auto& v : pred.probs) v /= static_cast<double>(ensemble.bases.size());
        int best = 0;
        for (int k = 1; k < n; ++k)
            if (pred.probs[static_cast<std::size_t>(k)] > pred.probs[static_cast<std::size_t>(best)]) best = k;
        pred.cls = best;
        return pred;
    }

    if (!ensemble.head) throw StateError("predict: method " + to_string(ensemble.spec.method) +
                                         " requires a trained head");
    Tensor input = head_input(ensemble.bases, ensemble.spec, image);
    Tensor logits = ensemble.head->infer(input);
    Tensor probs = softmax_values(logits);
    int best = 0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        pred.probs[k] = probs[k];
        if (probs[k] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    }
    pred.cls = best;
    return pred;
}

EvalReport evaluate_ensemble(const EnsembleModel& ensemble, const Dataset& ds,
                             const std::vector<int>& idx) {
    if (idx.empty()) throw ConfigError("evaluate_ensemble over an empty split");
    EvalReport report;
    report.per_class.assign(static_cast<std::size_t>(ds.n_classes), 0.0);
    report.class_counts.assign(static_cast<std::size_t>(ds.n_classes), 0);
    std::size_t correct = 0;
    for (int i : idx) {
        int label = ds.labels[static_cast<std::size_t>(i)];
        ++report.class_counts[static_cast<std::size_t>(label)];
        if (predict(ensemble, ds.images[static_cast<std::size_t>(i)]).cls == label) {
            ++correct;
            report.per_class[static_cast<std::size_t>(label)] += 1.0;
        }
    }
    for (int c = 0; c < ds.n_classes; ++c)
        if (report.class_counts[static_cast<std::size_t>(c)] > 0)
            report.per_class[static_cast<std::size_t>(c)] /=
                static_cast<double>(report.class_counts[static_cast<std::size_t>(c)]);
    report.overall = static_cast<double>(correct) / static_cast<double>(idx.size());
    return report;
}

}  // namespace fdl
