#include "fdl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "fdl/feature.hpp"

namespace fdl {

std::string to_string(InitStrategy s) {
    switch (s) {
        case InitStrategy::None: return "none";
        case InitStrategy::Same: return "same";
        case InitStrategy::Different: return "different";
    }
    return "?";
}

InitStrategy init_strategy_from_string(const std::string& s) {
    if (s == "none") return InitStrategy::None;
    if (s == "same") return InitStrategy::Same;
    if (s == "different") return InitStrategy::Different;
    throw ConfigError("unknown init strategy: " + s);
}

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::Adam ? "adam" : "sgd";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "sgd") return OptimizerKind::Sgd;
    throw ConfigError("unknown optimizer: " + s);
}

std::string to_string(AugKind k) {
    switch (k) {
        case AugKind::Rotation: return "rotation";
        case AugKind::HFlip: return "hflip";
        case AugKind::VFlip: return "vflip";
        case AugKind::LaplaceNoise: return "laplace_noise";
        case AugKind::Translation: return "translation";
    }
    return "?";
}

AugKind aug_kind_from_string(const std::string& s) {
    if (s == "rotation") return AugKind::Rotation;
    if (s == "hflip") return AugKind::HFlip;
    if (s == "vflip") return AugKind::VFlip;
    if (s == "laplace_noise") return AugKind::LaplaceNoise;
    if (s == "translation") return AugKind::Translation;
    throw ConfigError("unknown augmentation: " + s);
}

void EnsembleConfig::validate() {
    if (m < 1) throw ConfigError("model count m must be >= 1");
    if (distance_enabled && m < 2)
        throw ConfigError("distance loss requires at least 2 base models");
    // lr == 0 is allowed (the zero-step-size contract is observable); only
    // negative rates are configuration errors
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (eval_limit < 0) throw ConfigError("eval_limit must be >= 0");
    distance.validate();
    switch (init_strategy) {
        case InitStrategy::None:
            init_seeds.clear();
            break;
        case InitStrategy::Same:
            if (init_seeds.empty()) init_seeds = {1};
            if (init_seeds.size() != 1)
                throw ConfigError("init strategy 'same' takes exactly one seed");
            break;
        case InitStrategy::Different:
            if (init_seeds.empty())
                for (int i = 1; i <= m; ++i) init_seeds.push_back(static_cast<std::uint64_t>(i));
            if (static_cast<int>(init_seeds.size()) != m)
                throw ConfigError("init strategy 'different' needs m seeds, got " +
                                  std::to_string(init_seeds.size()));
            for (std::size_t i = 0; i < init_seeds.size(); ++i)
                for (std::size_t j = i + 1; j < init_seeds.size(); ++j)
                    if (init_seeds[i] == init_seeds[j])
                        throw ConfigError("init strategy 'different' needs distinct seeds");
            break;
    }
}

bool RunRecord::operator==(const RunRecord& other) const {
    if (best_epoch != other.best_epoch || best_val_acc_mean != other.best_val_acc_mean ||
        epochs.size() != other.epochs.size())
        return false;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        const auto& a = epochs[i];
        const auto& b = other.epochs[i];
        if (a.epoch != b.epoch || a.ce != b.ce || a.distance_loss != b.distance_loss ||
            a.pairwise != b.pairwise || a.val_acc != b.val_acc ||
            a.val_acc_mean != b.val_acc_mean)
            return false;
    }
    return true;
}

Tensor make_onehot(int n_classes, int label) {
    if (label < 0 || label >= n_classes) throw ValidationError("label out of range for one-hot");
    Tensor t({n_classes});
    t[static_cast<std::size_t>(label)] = 1.0;
    return t;
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

namespace {
double bilinear(const Tensor& img, double fy, double fx, int ch) {
    int h = img.extent(0), w = img.extent(1), c = img.extent(2);
    int y0 = static_cast<int>(std::floor(fy));
    int x0 = static_cast<int>(std::floor(fx));
    double wy = fy - y0, wx = fx - x0;
    double acc = 0.0;
    for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
            int y = y0 + dy, x = x0 + dx;
            if (y < 0 || y >= h || x < 0 || x >= w) continue;  // zero fill
            double weight = (dy ? wy : 1.0 - wy) * (dx ? wx : 1.0 - wx);
            acc += weight * img[(static_cast<std::size_t>(y) * w + x) * c + static_cast<std::size_t>(ch)];
        }
    return acc;
}

Tensor resample(const Tensor& img, const std::function<std::pair<double, double>(double, double)>& src) {
    int h = img.extent(0), w = img.extent(1), c = img.extent(2);
    Tensor out({h, w, c});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto [fy, fx] = src(static_cast<double>(y), static_cast<double>(x));
            for (int ch = 0; ch < c; ++ch)
                out[(static_cast<std::size_t>(y) * w + x) * c + static_cast<std::size_t>(ch)] =
                    bilinear(img, fy, fx, ch);
        }
    return out;
}
}  // namespace

Tensor hflip_image(const Tensor& image) {
    int h = image.extent(0), w = image.extent(1), c = image.extent(2);
    Tensor out({h, w, c});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                out[(static_cast<std::size_t>(y) * w + x) * c + static_cast<std::size_t>(ch)] =
                    image[(static_cast<std::size_t>(y) * w + (w - 1 - x)) * c + static_cast<std::size_t>(ch)];
    return out;
}

Tensor vflip_image(const Tensor& image) {
    int h = image.extent(0), w = image.extent(1), c = image.extent(2);
    Tensor out({h, w, c});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                out[(static_cast<std::size_t>(y) * w + x) * c + static_cast<std::size_t>(ch)] =
                    image[(static_cast<std::size_t>(h - 1 - y) * w + x) * c + static_cast<std::size_t>(ch)];
    return out;
}

Tensor rotate_image(const Tensor& image, double degrees) {
    double rad = degrees * 3.14159265358979323846 / 180.0;
    double cs = std::cos(rad), sn = std::sin(rad);
    double cy = (image.extent(0) - 1) / 2.0, cx = (image.extent(1) - 1) / 2.0;
    return resample(image, [=](double y, double x) {
        double ry = y - cy, rx = x - cx;
        // inverse mapping: rotate destination coords by -degrees
        return std::make_pair(cy + cs * ry + sn * rx, cx - sn * ry + cs * rx);
    });
}

Tensor translate_image(const Tensor& image, double dy, double dx) {
    return resample(image, [=](double y, double x) { return std::make_pair(y - dy, x - dx); });
}

Tensor augment(const Tensor& image, Rng& rng, const AugmentationSpec& spec) {
    Tensor x = image;
    if (spec.enabled.count(AugKind::Rotation)) {
        double angle = rng.uniform(-spec.rotation_deg, spec.rotation_deg);
        x = rotate_image(x, angle);
    }
    if (spec.enabled.count(AugKind::HFlip)) {
        if (rng.bernoulli(spec.flip_p)) x = hflip_image(x);
    }
    if (spec.enabled.count(AugKind::VFlip)) {
        if (rng.bernoulli(spec.flip_p)) x = vflip_image(x);
    }
    if (spec.enabled.count(AugKind::LaplaceNoise)) {
        Tensor noisy = x.clone();
        for (std::size_t i = 0; i < noisy.size(); ++i) {
            double v = noisy[i] + rng.laplace(spec.laplace_scale);
            noisy[i] = std::clamp(v, 0.0, 1.0);
        }
        x = noisy;
    }
    if (spec.enabled.count(AugKind::Translation)) {
        double dy = rng.uniform(-spec.translation_frac * image.extent(0),
                                spec.translation_frac * image.extent(0));
        double dx = rng.uniform(-spec.translation_frac * image.extent(1),
                                spec.translation_frac * image.extent(1));
        x = translate_image(x, dy, dx);
    }
    return x;
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

Optimizer::Optimizer(OptimizerKind kind, double lr, std::vector<Tensor> params)
    : kind_(kind), lr_(lr), params_(std::move(params)) {
    for (auto& p : params_) {
        if (!p.grad_active()) p.ensure_grad();
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void Optimizer::step() {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++t_;
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        const auto& g = p.grad();
        if (kind_ == OptimizerKind::Sgd) {
            for (std::size_t i = 0; i < g.size(); ++i) p[i] -= lr_ * g[i];
            continue;
        }
        auto& m = m_[pi];
        auto& v = v_[pi];
        double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
            double mhat = m[i] / c1;
            double vhat = v[i] / c2;
            p[i] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
        }
    }
}

// ---------------------------------------------------------------------------
// ensemble setup and losses
// ---------------------------------------------------------------------------

std::vector<LayerGraph> init_models(const EnsembleConfig& config) {
    std::vector<LayerGraph> models;
    models.reserve(static_cast<std::size_t>(config.m));
    for (int i = 0; i < config.m; ++i) {
        std::optional<std::uint64_t> seed;
        switch (config.init_strategy) {
            case InitStrategy::None: seed = std::nullopt; break;
            case InitStrategy::Same: seed = config.init_seeds.at(0); break;
            case InitStrategy::Different: seed = config.init_seeds.at(static_cast<std::size_t>(i)); break;
        }
        models.push_back(build_model(config.arch, seed));
    }
    return models;
}

namespace {
void check_homogeneous(const std::vector<LayerGraph>& models) {
    if (models.empty()) throw ConfigError("ensemble has no models");
    for (const auto& m : models) {
        if (m.input_shape() != models[0].input_shape() || m.n_classes() != models[0].n_classes())
            throw ConfigError("base models must share input shape and class count");
    }
}
}  // namespace

Tensor joint_loss(Graph& g, const std::vector<LayerGraph>& models, const Batch& batch,
                  const EnsembleConfig& config) {
    check_homogeneous(models);
    if (batch.images.empty() || batch.images.size() != batch.labels.size())
        throw ConfigError("joint_loss needs a non-empty batch with matching labels");
    std::size_t b = batch.images.size();
    double inv_b = 1.0 / static_cast<double>(b);
    int n = models[0].n_classes();

    std::vector<std::vector<Tensor>> reps(models.size());
    Tensor total;
    for (std::size_t i = 0; i < models.size(); ++i) {
        Tensor ce_sum;
        for (std::size_t s = 0; s < b; ++s) {
            auto fw = models[i].forward(g, batch.images[s]);
            Tensor ce = g.softmax_cross_entropy(fw.logits, make_onehot(n, batch.labels[s]));
            ce_sum = ce_sum.defined() ? g.add(ce_sum, ce) : ce;
            if (config.distance_enabled) reps[i].push_back(represent(g, fw.last_conv).vector);
        }
        Tensor ce_mean = g.mul(ce_sum, inv_b);
        total = total.defined() ? g.add(total, ce_mean) : ce_mean;
    }
    if (config.distance_enabled) {
        Tensor dist_sum;
        for (std::size_t s = 0; s < b; ++s) {
            std::vector<Tensor> sample_reps;
            sample_reps.reserve(models.size());
            for (std::size_t i = 0; i < models.size(); ++i) sample_reps.push_back(reps[i][s]);
            Tensor d = ensemble_distance_loss(g, sample_reps, config.distance);
            dist_sum = dist_sum.defined() ? g.add(dist_sum, d) : d;
        }
        total = g.add(total, g.mul(dist_sum, inv_b));
    }
    return total;
}

int predict_class(const LayerGraph& model, const Tensor& image) {
    Tensor logits = model.infer(image);
    int best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

double accuracy(const LayerGraph& model, const Dataset& ds, const std::vector<int>& idx,
                int limit) {
    std::size_t n = idx.size();
    if (limit > 0 && static_cast<std::size_t>(limit) < n) n = static_cast<std::size_t>(limit);
    if (n == 0) throw ConfigError("accuracy over an empty split");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        int sample = idx[i];
        if (predict_class(model, ds.images[static_cast<std::size_t>(sample)]) ==
            ds.labels[static_cast<std::size_t>(sample)])
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

/// Runs fn(0..m-1), striped over at most `workers` threads. Reductions stay
/// with the caller, so scheduling cannot reorder any floating-point sums.
void parallel_for_models(int m, int workers, const std::function<void(int)>& fn) {
    int w = std::min(workers, m);
    if (w <= 1) {
        for (int i = 0; i < m; ++i) fn(i);
        return;
    }
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(w));
    for (int t = 0; t < w; ++t) {
        threads.emplace_back([&, t]() {
            try {
                for (int i = t; i < m; i += w) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct ModelPass {
    Graph g;
    Tensor ce_mean;
    std::vector<Tensor> reps;  // one per sample
};

struct StepStats {
    std::vector<double> ce;
    double distance = 0.0;
    std::vector<std::vector<Tensor>> reps;  // [m][B]
};

StepStats train_step(std::vector<LayerGraph>& models, const Batch& batch,
                     const EnsembleConfig& config, std::vector<Optimizer>& opts) {
    int m = static_cast<int>(models.size());
    std::size_t b = batch.images.size();
    double inv_b = 1.0 / static_cast<double>(b);
    int n = models[0].n_classes();

    std::vector<std::unique_ptr<ModelPass>> passes(static_cast<std::size_t>(m));
    for (auto& p : passes) p = std::make_unique<ModelPass>();

    parallel_for_models(m, config.workers, [&](int i) {
        ModelPass& pass = *passes[static_cast<std::size_t>(i)];
        Tensor ce_sum;
        for (std::size_t s = 0; s < b; ++s) {
            auto fw = models[static_cast<std::size_t>(i)].forward(pass.g, batch.images[s]);
            Tensor ce = pass.g.softmax_cross_entropy(fw.logits, make_onehot(n, batch.labels[s]));
            ce_sum = ce_sum.defined() ? pass.g.add(ce_sum, ce) : ce;
            pass.reps.push_back(represent(pass.g, fw.last_conv).vector);
        }
        pass.ce_mean = pass.g.mul(ce_sum, inv_b);
    });

    StepStats stats;
    for (int i = 0; i < m; ++i) {
        stats.ce.push_back(passes[static_cast<std::size_t>(i)]->ce_mean.value());
        stats.reps.push_back(passes[static_cast<std::size_t>(i)]->reps);
    }

    // Couple the models through the distance term on the representation
    // values, then hand each model its share of the gradient as a backward
    // seed. This is arithmetically identical to one joint tape: the distance
    // subgraph sits after all model nodes, so a unified reverse sweep would
    // finish it first anyway.
    if (config.distance_enabled) {
        Graph gc;
        Tensor dist_sum;
        for (std::size_t s = 0; s < b; ++s) {
            std::vector<Tensor> sample_reps;
            sample_reps.reserve(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i)
                sample_reps.push_back(passes[static_cast<std::size_t>(i)]->reps[s]);
            Tensor d = ensemble_distance_loss(gc, sample_reps, config.distance);
            dist_sum = dist_sum.defined() ? gc.add(dist_sum, d) : d;
        }
        Tensor dist_mean = gc.mul(dist_sum, inv_b);
        stats.distance = dist_mean.value();
        for (auto& pass : passes)
            for (auto& rep : pass->reps) rep.ensure_grad();
        gc.backward(dist_mean);
    }

    parallel_for_models(m, config.workers, [&](int i) {
        ModelPass& pass = *passes[static_cast<std::size_t>(i)];
        opts[static_cast<std::size_t>(i)].zero_grad();
        std::vector<std::pair<Tensor, std::vector<double>>> seeds;
        seeds.emplace_back(pass.ce_mean, std::vector<double>{1.0});
        if (config.distance_enabled)
            for (auto& rep : pass.reps) seeds.emplace_back(rep, rep.grad());
        pass.g.backward_seeded(seeds);
        opts[static_cast<std::size_t>(i)].step();
    });
    return stats;
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string format_metrics_line(const EpochRecord& rec, int m, int best_epoch) {
    std::ostringstream os;
    os << "epoch=" << rec.epoch;
    for (int i = 0; i < m; ++i) os << " ce" << i << "=" << fmt_g(rec.ce[static_cast<std::size_t>(i)]);
    os << " dloss=" << fmt_g(rec.distance_loss);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            os << " d" << i << "_" << j << "="
               << fmt_g(rec.pairwise[static_cast<std::size_t>(i * m + j)]);
    for (int i = 0; i < m; ++i)
        os << " acc" << i << "=" << fmt_g(rec.val_acc[static_cast<std::size_t>(i)]);
    os << " acc_mean=" << fmt_g(rec.val_acc_mean);
    os << " best_epoch=" << best_epoch;
    return os.str();
}

TrainResult train(const EnsembleConfig& config_in, const Dataset& dataset,
                  std::ostream* metrics) {
    EnsembleConfig config = config_in;
    config.validate();
    if (dataset.train_idx.empty()) throw ConfigError("training split is empty");
    if (dataset.val_idx.empty()) throw ConfigError("validation split is empty");
    Shape expected{config.arch.input_h, config.arch.input_w, config.arch.input_c};
    if (!dataset.images.empty() && dataset.images[0].shape() != expected)
        throw ConfigError("dataset images " + shape_str(dataset.images[0].shape()) +
                          " do not match the configured input " + shape_str(expected));
    if (dataset.n_classes != config.arch.n_classes)
        throw ConfigError("dataset has " + std::to_string(dataset.n_classes) +
                          " classes but the architecture expects " +
                          std::to_string(config.arch.n_classes));

    auto t0 = std::chrono::steady_clock::now();
    std::vector<LayerGraph> models = init_models(config);
    std::vector<Optimizer> opts;
    opts.reserve(models.size());
    for (auto& model : models)
        opts.emplace_back(config.optimizer, config.learning_rate, model.param_list());

    Rng data_rng(derive_seed(config.rng_seed, 0xda7a));
    int m = config.m;
    TrainResult result;
    RunRecord& record = result.record;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<int> order = dataset.train_idx;
        data_rng.shuffle(order);

        std::vector<double> ce_sum(static_cast<std::size_t>(m), 0.0);
        std::vector<double> pair_sum(static_cast<std::size_t>(m * m), 0.0);
        double dist_sum = 0.0;
        std::size_t batches = 0, samples = 0;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            Batch batch;
            for (std::size_t k = start; k < stop; ++k) {
                int idx = order[k];
                batch.images.push_back(
                    augment(dataset.images[static_cast<std::size_t>(idx)], data_rng, config.augmentation));
                batch.labels.push_back(dataset.labels[static_cast<std::size_t>(idx)]);
            }
            StepStats stats = train_step(models, batch, config, opts);

            double joint = stats.distance;
            for (double c : stats.ce) joint += c;
            if (!std::isfinite(joint)) {
                std::ostringstream os;
                os << "non-finite loss at epoch " << epoch << " batch " << batches << ":";
                for (int i = 0; i < m; ++i) os << " ce" << i << "=" << stats.ce[static_cast<std::size_t>(i)];
                os << " dloss=" << stats.distance;
                throw StateError(os.str());
            }

            for (int i = 0; i < m; ++i) ce_sum[static_cast<std::size_t>(i)] += stats.ce[static_cast<std::size_t>(i)];
            dist_sum += stats.distance;
            ++batches;
            // per-sample pairwise diagnostics (values only, no gradients)
            if (m >= 2) {
                for (std::size_t s = 0; s < batch.images.size(); ++s)
                    for (int i = 0; i < m; ++i)
                        for (int j = i + 1; j < m; ++j)
                            pair_sum[static_cast<std::size_t>(i * m + j)] += pair_loss_value(
                                stats.reps[static_cast<std::size_t>(i)][s],
                                stats.reps[static_cast<std::size_t>(j)][s], config.distance);
            }
            samples += batch.images.size();
        }

        EpochRecord rec;
        rec.epoch = epoch;
        for (int i = 0; i < m; ++i)
            rec.ce.push_back(ce_sum[static_cast<std::size_t>(i)] / static_cast<double>(batches));
        rec.distance_loss = dist_sum / static_cast<double>(batches);
        rec.pairwise.assign(static_cast<std::size_t>(m * m), 0.0);
        if (m >= 2 && samples > 0) {
            for (int i = 0; i < m; ++i) {
                rec.pairwise[static_cast<std::size_t>(i * m + i)] =
                    config.distance.alpha + config.distance.beta;
                for (int j = i + 1; j < m; ++j) {
                    double v = pair_sum[static_cast<std::size_t>(i * m + j)] / static_cast<double>(samples);
                    rec.pairwise[static_cast<std::size_t>(i * m + j)] = v;
                    rec.pairwise[static_cast<std::size_t>(j * m + i)] = v;
                }
            }
        }

        rec.val_acc.assign(static_cast<std::size_t>(m), 0.0);
        parallel_for_models(m, config.workers, [&](int i) {
            rec.val_acc[static_cast<std::size_t>(i)] =
                accuracy(models[static_cast<std::size_t>(i)], dataset, dataset.val_idx, config.eval_limit);
        });
        double acc_total = 0.0;
        for (double a : rec.val_acc) acc_total += a;
        rec.val_acc_mean = acc_total / static_cast<double>(m);

        // ties keep the later epoch (the longer-trained snapshot)
        if (record.epochs.empty() || rec.val_acc_mean >= record.best_val_acc_mean) {
            record.best_val_acc_mean = rec.val_acc_mean;
            record.best_epoch = epoch;
            result.best_models.clear();
            for (const auto& model : models) result.best_models.push_back(model.clone());
        }
        record.epochs.push_back(rec);
        if (metrics) {
            (*metrics) << format_metrics_line(rec, m, record.best_epoch) << "\n";
            metrics->flush();
        }
    }

    result.final_models = std::move(models);
    record.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace fdl
