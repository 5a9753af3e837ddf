#include "fdl/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fdl/data.hpp"
#include "fdl/feature.hpp"
#include "fdl/rng.hpp"

namespace fs = std::filesystem;

namespace fdl::verify {

// ---------------------------------------------------------------------------
// reference implementations
// ---------------------------------------------------------------------------

Tensor ref_matmul(const Tensor& a, const Tensor& b) {
    int n = a.extent(0), k = a.extent(1), p = b.extent(1);
    Tensor out({n, p});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) {
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk)
                acc += a.at({i, kk}) * b.at({kk, j});
            out.at({i, j}) = acc;
        }
    return out;
}

Tensor ref_conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
                  Padding padding) {
    int h = input.extent(0), w = input.extent(1), cin = input.extent(2);
    int k = kernels.extent(0), cout = kernels.extent(3);
    int pad = padding == Padding::Same ? (k - 1) / 2 : 0;
    int oh = (h + 2 * pad - k) / stride + 1;
    int ow = (w + 2 * pad - k) / stride + 1;
    Tensor out({oh, ow, cout});
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int co = 0; co < cout; ++co) {
                double acc = bias.at({co});
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx)
                        for (int ci = 0; ci < cin; ++ci) {
                            int iy = oy * stride - pad + ky;
                            int ix = ox * stride - pad + kx;
                            double v = 0.0;
                            if (iy >= 0 && iy < h && ix >= 0 && ix < w) v = input.at({iy, ix, ci});
                            acc += v * kernels.at({ky, kx, ci, co});
                        }
                out.at({oy, ox, co}) = acc;
            }
    return out;
}

Tensor ref_pool2d(const Tensor& input, int window, int stride, PoolKind kind) {
    bool rank3 = input.rank() == 3;
    int h = input.extent(0), w = input.extent(1), c = rank3 ? input.extent(2) : 1;
    int oh = (h - window) / stride + 1;
    int ow = (w - window) / stride + 1;
    Tensor out(rank3 ? Shape{oh, ow, c} : Shape{oh, ow});
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int ch = 0; ch < c; ++ch) {
                double best = -1e300, acc = 0.0;
                for (int wy = 0; wy < window; ++wy)
                    for (int wx = 0; wx < window; ++wx) {
                        int iy = oy * stride + wy, ix = ox * stride + wx;
                        double v = rank3 ? input.at({iy, ix, ch}) : input.at({iy, ix});
                        best = std::max(best, v);
                        acc += v;
                    }
                double r = kind == PoolKind::Max ? best : acc / (window * window);
                if (rank3)
                    out.at({oy, ox, ch}) = r;
                else
                    out.at({oy, ox}) = r;
            }
    return out;
}

Tensor ref_aggregate(const Tensor& feature_maps) {
    int h = feature_maps.extent(0), w = feature_maps.extent(1), d = feature_maps.extent(2);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int c = 0; c < d; ++c) acc += feature_maps.at({y, x, c});
            out.at({y, x}) = acc;
        }
    return out;
}

Tensor ref_mask(const Tensor& aggregation, double* tau_out) {
    double tau = 0.0;
    for (std::size_t i = 0; i < aggregation.size(); ++i) tau += aggregation[i];
    tau /= static_cast<double>(aggregation.size());
    if (tau_out) *tau_out = tau;
    Tensor out(aggregation.shape());
    for (std::size_t i = 0; i < aggregation.size(); ++i)
        out[i] = aggregation[i] > tau ? aggregation[i] : 0.0;
    return out;
}

double ref_pair_loss(const Tensor& vi, const Tensor& vj, const DistanceSpec& spec) {
    double dot = 0.0, ni = 0.0, nj = 0.0, d2 = 0.0;
    double mi = 0.0, mj = 0.0;
    std::size_t n = vi.size();
    for (std::size_t k = 0; k < n; ++k) {
        dot += vi[k] * vj[k];
        ni += vi[k] * vi[k];
        nj += vj[k] * vj[k];
        d2 += (vi[k] - vj[k]) * (vi[k] - vj[k]);
        mi += vi[k];
        mj += vj[k];
    }
    double cosine = dot / ((std::sqrt(ni) + spec.epsilon) * (std::sqrt(nj) + spec.epsilon));
    double eucl = std::exp(-d2);
    switch (spec.kind) {
        case DistanceKind::CosinePlusEuclidean: return spec.alpha * cosine + spec.beta * eucl;
        case DistanceKind::CosineOnly: return spec.alpha * cosine;
        case DistanceKind::EuclideanOnly: return spec.beta * eucl;
        case DistanceKind::Ssim: {
            mi /= static_cast<double>(n);
            mj /= static_cast<double>(n);
            double vx = 0.0, vy = 0.0, cov = 0.0, range = spec.epsilon;
            for (std::size_t k = 0; k < n; ++k) {
                vx += (vi[k] - mi) * (vi[k] - mi);
                vy += (vj[k] - mj) * (vj[k] - mj);
                cov += (vi[k] - mi) * (vj[k] - mj);
                range = std::max({range, vi[k], vj[k]});
            }
            vx /= static_cast<double>(n);
            vy /= static_cast<double>(n);
            cov /= static_cast<double>(n);
            double c1 = 0.0001 * range * range, c2 = 0.0009 * range * range;
            double ssim = ((2 * mi * mj + c1) * (2 * cov + c2)) /
                          ((mi * mi + mj * mj + c1) * (vx + vy + c2));
            return spec.alpha * ssim;
        }
    }
    return 0.0;
}

HeatMap ref_grad_cam(const LayerGraph& model, const Tensor& image, int class_id) {
    const auto& params = model.params();
    const Tensor& kw = params.at("conv0.w");
    const Tensor& kb = params.at("conv0.b");
    const Tensor& dw = params.at("dense1.w");
    Tensor act = ref_conv2d(image, kw, kb, 1, Padding::Valid);
    for (std::size_t i = 0; i < act.size(); ++i) act[i] = std::max(act[i], 0.0);
    int h = act.extent(0), w = act.extent(1), d = act.extent(2);

    // d(logit_k)/d(act[y,x,c]) = dense1.w[flat(y,x,c), k]
    std::vector<double> weights(static_cast<std::size_t>(d), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < d; ++c)
                weights[static_cast<std::size_t>(c)] += dw.at({(y * w + x) * d + c, class_id});
    for (double& v : weights) v /= static_cast<double>(h * w);

    HeatMap map;
    map.class_id = class_id;
    map.values = Tensor({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int c = 0; c < d; ++c) acc += weights[static_cast<std::size_t>(c)] * act.at({y, x, c});
            map.values.at({y, x}) = std::max(acc, 0.0);
            map.raw_max = std::max(map.raw_max, map.values.at({y, x}));
        }
    if (map.raw_max > 0.0)
        for (std::size_t i = 0; i < map.values.size(); ++i) map.values[i] /= map.raw_max;
    return map;
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

GradCheckStats check_gradients(const std::function<double()>& value,
                               const std::function<std::vector<std::vector<double>>()>& analytic,
                               std::span<Tensor> params, double h) {
    GradCheckStats stats;
    std::vector<std::vector<double>> grads = analytic();
    if (grads.size() != params.size())
        throw ValidationError("gradient count does not match parameter count");
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        for (std::size_t i = 0; i < p.size(); ++i) {
            double saved = p[i];
            p[i] = saved + h;
            double up = value();
            p[i] = saved - h;
            double down = value();
            p[i] = saved;
            double fd = (up - down) / (2.0 * h);
            double a = grads[pi][i];
            double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-4});
            ++stats.checked;
            stats.worst = std::max(stats.worst, rel);
            if (rel >= 1e-4) ++stats.over_tol;
        }
    }
    return stats;
}

std::vector<std::vector<double>> tape_gradients(const std::function<Tensor(Graph&)>& build,
                                                std::span<Tensor> params) {
    for (auto& p : params) {
        p.ensure_grad();
        p.zero_grad();
    }
    Graph g;
    Tensor loss = build(g);
    g.backward(loss);
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(p.grad());
    return out;
}

// ---------------------------------------------------------------------------
// toy ensemble
// ---------------------------------------------------------------------------

namespace {

LayerGraph build_toy_model(std::uint64_t seed) {
    return LayerGraphBuilder({8, 8, 2})
        .conv(3, 4).relu()
        .conv(3, 3).relu()
        .flatten()
        .dense(2)
        .build(seed);
}

/// Smallest distance of any ReLU input or mask entry to its kink, replayed
/// with the reference ops so the probe shares nothing with the tape.
double toy_margin(const LayerGraph& model, const Tensor& image) {
    const auto& params = model.params();
    Tensor c1 = ref_conv2d(image, params.at("conv0.w"), params.at("conv0.b"), 1, Padding::Same);
    double margin = 1e300;
    for (std::size_t i = 0; i < c1.size(); ++i) margin = std::min(margin, std::abs(c1[i]));
    Tensor r1 = c1.clone();
    for (std::size_t i = 0; i < r1.size(); ++i) r1[i] = std::max(r1[i], 0.0);
    Tensor c2 = ref_conv2d(r1, params.at("conv1.w"), params.at("conv1.b"), 1, Padding::Same);
    for (std::size_t i = 0; i < c2.size(); ++i) margin = std::min(margin, std::abs(c2[i]));
    Tensor r2 = c2.clone();
    for (std::size_t i = 0; i < r2.size(); ++i) r2[i] = std::max(r2[i], 0.0);
    double tau = 0.0;
    Tensor agg = ref_aggregate(r2);
    Tensor masked = ref_mask(agg, &tau);
    for (std::size_t i = 0; i < agg.size(); ++i) margin = std::min(margin, std::abs(agg[i] - tau));
    return margin;
}

}  // namespace

ToyEnsemble make_toy_ensemble(std::uint64_t seed) {
    ToyEnsemble toy;
    toy.config.m = 2;
    toy.config.arch.input_h = 8;
    toy.config.arch.input_w = 8;
    toy.config.arch.input_c = 2;
    toy.config.arch.n_classes = 2;
    toy.config.distance = DistanceSpec{};
    toy.config.distance_enabled = true;
    toy.models.push_back(build_toy_model(derive_seed(seed, 1)));
    toy.models.push_back(build_toy_model(derive_seed(seed, 2)));

    Rng rng(derive_seed(seed, 3));
    for (int attempt = 0; attempt < 64; ++attempt) {
        toy.batch.images.clear();
        toy.batch.labels.clear();
        for (int s = 0; s < 2; ++s) {
            Tensor img({8, 8, 2});
            for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(-1.0, 1.0);
            toy.batch.images.push_back(img);
            toy.batch.labels.push_back(s % 2);
        }
        double margin = 1e300;
        for (const auto& model : toy.models)
            for (const auto& img : toy.batch.images)
                margin = std::min(margin, toy_margin(model, img));
        if (margin > 1e-3) break;
        if (attempt == 63)
            throw StateError("could not draw a toy batch clear of activation boundaries");
    }

    for (auto& model : toy.models)
        for (auto& p : model.param_list()) toy.params.push_back(p);
    return toy;
}

// ---------------------------------------------------------------------------
// fast checks
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

EnsembleConfig variant(const EnsembleConfig& base, DistanceKind kind, double alpha, double beta,
                       bool enabled) {
    EnsembleConfig cfg = base;
    cfg.distance_enabled = enabled;
    cfg.distance.kind = kind;
    cfg.distance.alpha = alpha;
    cfg.distance.beta = beta;
    return cfg;
}

}  // namespace

CheckResult check_gradient_fidelity() {
    auto t0 = std::chrono::steady_clock::now();
    ToyEnsemble toy = make_toy_ensemble(20240501);

    struct Variant {
        const char* name;
        EnsembleConfig cfg;
    };
    std::vector<Variant> variants = {
        {"ce", variant(toy.config, DistanceKind::CosinePlusEuclidean, 1, 10, false)},
        {"pairdist-cosine", variant(toy.config, DistanceKind::CosineOnly, 1, 0, true)},
        {"pairdist-euclidean", variant(toy.config, DistanceKind::EuclideanOnly, 0, 10, true)},
        {"pairdist-combined", variant(toy.config, DistanceKind::CosinePlusEuclidean, 1, 10, true)},
        {"joint", variant(toy.config, DistanceKind::CosinePlusEuclidean, 1, 10, true)},
    };
    // pairdist-* variants drop the CE term so the distance loss is checked
    // in isolation; the representations still come through the full conv
    // pipeline.
    std::ostringstream detail;
    bool pass = true;
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        const auto& var = variants[vi];
        bool distance_only = vi >= 1 && vi <= 3;
        auto build = [&](Graph& g) -> Tensor {
            if (!distance_only) return joint_loss(g, toy.models, toy.batch, var.cfg);
            Tensor total;
            for (const auto& img : toy.batch.images) {
                std::vector<Tensor> reps;
                for (const auto& model : toy.models) {
                    auto fw = model.forward(g, img);
                    reps.push_back(represent(g, fw.last_conv).vector);
                }
                Tensor d = ensemble_distance_loss(g, reps, var.cfg.distance);
                total = total.defined() ? g.add(total, d) : d;
            }
            return g.mul(total, 1.0 / static_cast<double>(toy.batch.images.size()));
        };
        auto value = [&]() {
            Graph g;
            return build(g).value();
        };
        auto analytic = [&]() { return tape_gradients(build, toy.params); };
        GradCheckStats stats = check_gradients(value, analytic, toy.params, 1e-4);
        bool ok = stats.frac_ok() >= 0.99 && stats.worst < 1e-3;
        pass = pass && ok;
        detail << var.name << ": ok=" << fmt(100.0 * stats.frac_ok()) << "% worst="
               << fmt(stats.worst) << (ok ? "" : " FAIL") << "; ";
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail << toy.params.size() << " tensors, " << fmt(secs) << "s";
    return {"gradient-fidelity", pass, detail.str()};
}

CheckResult check_oracle_equivalence() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(0xf00d);
    double worst = 0.0;
    auto note = [&worst](double err) { worst = std::max(worst, err); };
    constexpr double kTol = 1e-10;

    auto rand_tensor = [&rng](Shape shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
        return t;
    };

    for (int it = 0; it < 100; ++it) {
        // matmul
        {
            int n = rng.uniform_int(1, 8), k = rng.uniform_int(1, 8), p = rng.uniform_int(1, 8);
            Tensor a = rand_tensor({n, k}, -2, 2), b = rand_tensor({k, p}, -2, 2);
            Graph g;
            Tensor got = g.matmul(a, b);
            Tensor want = ref_matmul(a, b);
            for (std::size_t i = 0; i < got.size(); ++i) note(std::abs(got[i] - want[i]));
        }
        // conv2d
        {
            int h = rng.uniform_int(3, 8), w = rng.uniform_int(3, 8);
            int cin = rng.uniform_int(1, 3), cout = rng.uniform_int(1, 3);
            int k = rng.bernoulli(0.5) ? 3 : 1;
            int stride = rng.uniform_int(1, 2);
            Padding pad = rng.bernoulli(0.5) ? Padding::Same : Padding::Valid;
            Tensor in = rand_tensor({h, w, cin}, -2, 2);
            Tensor kw = rand_tensor({k, k, cin, cout}, -1, 1);
            Tensor kb = rand_tensor({cout}, -1, 1);
            Graph g;
            Tensor got = g.conv2d(in, kw, kb, stride, pad);
            Tensor want = ref_conv2d(in, kw, kb, stride, pad);
            for (std::size_t i = 0; i < got.size(); ++i) note(std::abs(got[i] - want[i]));
        }
        // pool2d
        {
            int h = rng.uniform_int(2, 8), w = rng.uniform_int(2, 8), c = rng.uniform_int(1, 3);
            int window = rng.uniform_int(1, std::min(h, w));
            int stride = rng.uniform_int(1, 2);
            PoolKind kind = rng.bernoulli(0.5) ? PoolKind::Max : PoolKind::Avg;
            Tensor in = rand_tensor({h, w, c}, -2, 2);
            Graph g;
            Tensor got = g.pool2d(in, window, stride, kind);
            Tensor want = ref_pool2d(in, window, stride, kind);
            for (std::size_t i = 0; i < got.size(); ++i) note(std::abs(got[i] - want[i]));
        }
        // aggregate + mask
        {
            int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8), d = rng.uniform_int(1, 8);
            Tensor maps = rand_tensor({h, w, d}, 0, 2);
            Graph g;
            Tensor agg = g.channel_sum(maps);
            Tensor agg_want = ref_aggregate(maps);
            for (std::size_t i = 0; i < agg.size(); ++i) note(std::abs(agg[i] - agg_want[i]));
            double tau_got = 0.0, tau_want = 0.0;
            Tensor m_got = g.mask_above_mean(agg, &tau_got);
            Tensor m_want = ref_mask(agg_want, &tau_want);
            note(std::abs(tau_got - tau_want));
            for (std::size_t i = 0; i < m_got.size(); ++i) note(std::abs(m_got[i] - m_want[i]));
        }
        // pair_loss (all four kinds)
        {
            int n = rng.uniform_int(1, 8);
            Tensor vi = rand_tensor({n}, 0, 2), vj = rand_tensor({n}, 0, 2);
            for (DistanceKind kind : {DistanceKind::CosinePlusEuclidean, DistanceKind::CosineOnly,
                                      DistanceKind::EuclideanOnly, DistanceKind::Ssim}) {
                DistanceSpec spec;
                spec.kind = kind;
                spec.alpha = rng.uniform(0, 2);
                spec.beta = rng.uniform(0, 12);
                note(std::abs(pair_loss_value(vi, vj, spec) - ref_pair_loss(vi, vj, spec)));
            }
        }
        // grad_cam on a tiny conv-relu-flatten-dense model
        {
            int h = rng.uniform_int(4, 8), w = rng.uniform_int(4, 8);
            int cin = rng.uniform_int(1, 2), d = rng.uniform_int(1, 3);
            int n_cls = rng.uniform_int(2, 4);
            LayerGraph model = LayerGraphBuilder({h, w, cin})
                                   .conv(3, d, 1, Padding::Valid).relu()
                                   .flatten()
                                   .dense(n_cls)
                                   .build(rng.next_u64());
            Tensor img = rand_tensor({h, w, cin}, 0, 1);
            int cls = rng.uniform_int(0, n_cls - 1);
            HeatMap got = grad_cam(model, img, cls);
            HeatMap want = ref_grad_cam(model, img, cls);
            note(std::abs(got.raw_max - want.raw_max));
            for (std::size_t i = 0; i < got.values.size(); ++i)
                note(std::abs(got.values[i] - want.values[i]));
        }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream detail;
    detail << "worst abs err=" << fmt(worst) << " over 100 instances/op, " << fmt(secs) << "s";
    return {"oracle-equivalence", worst <= kTol, detail.str()};
}

CheckResult check_loss_bounds() {
    Rng rng(0xb0b5);
    DistanceSpec spec;  // alpha=1, beta=10
    double eps_slack = 1e-9;
    bool pass = true;
    std::ostringstream detail;
    for (int it = 0; it < 1000 && pass; ++it) {
        int n = rng.uniform_int(1, 16);
        Tensor vi({n}), vj({n});
        for (std::size_t i = 0; i < vi.size(); ++i) vi[i] = rng.uniform(0, 2);
        for (std::size_t i = 0; i < vj.size(); ++i) vj[i] = rng.uniform(0, 2);
        if (it % 97 == 0)
            for (std::size_t i = 0; i < vi.size(); ++i) vi[i] = 0.0;  // exercise the eps guard
        DistanceSpec cos_only{DistanceKind::CosineOnly, 1.0, 0.0, spec.epsilon};
        DistanceSpec euc_only{DistanceKind::EuclideanOnly, 0.0, 1.0, spec.epsilon};
        double cosine = pair_loss_value(vi, vj, cos_only);
        double eucl = pair_loss_value(vi, vj, euc_only);
        double pair = pair_loss_value(vi, vj, spec);
        if (cosine < -eps_slack || cosine > 1.0 + eps_slack) {
            pass = false;
            detail << "cosine out of bounds: " << cosine;
        }
        if (eucl <= 0.0 || eucl > 1.0) {
            pass = false;
            detail << "exp term out of bounds: " << eucl;
        }
        if (pair < 0.0 || pair > spec.alpha + spec.beta) {
            pass = false;
            detail << "pair loss out of bounds: " << pair;
        }
    }
    if (pass) detail << "cosine in [0,1], exp in (0,1], pair in [0,alpha+beta] over 1000 pairs";
    return {"loss-bounds", pass, detail.str()};
}

CheckResult check_mask_semantics() {
    Rng rng(0x3a5c);
    bool pass = true;
    std::ostringstream detail;
    for (int it = 0; it < 200 && pass; ++it) {
        int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
        Tensor a({h, w});
        bool constant = it % 50 == 0;
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = constant ? 5.0 : rng.uniform(-2, 2);
        Graph g;
        double tau = 0.0;
        Tensor masked = g.mask_above_mean(a, &tau);
        // brute-force indicator construction
        bool non_constant = false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] != a[0]) non_constant = true;
        std::size_t kept = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double want = a[i] > tau ? a[i] : 0.0;
            if (masked[i] != want) {
                pass = false;
                detail << "mask mismatch at " << i;
                break;
            }
            if (masked[i] != 0.0 && !(masked[i] > tau)) {
                pass = false;
                detail << "kept value not above tau";
                break;
            }
            if (masked[i] != 0.0) ++kept;
        }
        if (pass && non_constant && kept >= a.size() && a.size() > 1) {
            pass = false;
            detail << "non-constant map kept every pixel";
        }
        if (pass && constant && kept != 0) {
            pass = false;
            detail << "constant map must mask to zero";
        }
    }
    if (pass) detail << "mask equals A*indicator(A>mean(A)) on 200 random maps";
    return {"mask-semantics", pass, detail.str()};
}

CheckResult check_softmax_simplex() {
    Rng rng(0x50f7);
    bool pass = true;
    std::ostringstream detail;
    for (int it = 0; it < 500 && pass; ++it) {
        int n = rng.uniform_int(2, 12);
        Tensor logits({n});
        for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = rng.uniform(-40, 40);
        Graph g;
        Tensor p = g.softmax(logits);
        double total = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            total += p[i];
            if (p[i] < 0.0 || p[i] > 1.0) {
                pass = false;
                detail << "probability out of [0,1]";
            }
        }
        if (std::abs(total - 1.0) > 1e-12) {
            pass = false;
            detail << "softmax sums to " << total;
        }
    }
    if (pass) detail << "sums to 1 +- 1e-12 on 500 random logit vectors";
    return {"softmax-simplex", pass, detail.str()};
}

CheckResult check_format_fidelity() {
    fs::path dir = fs::temp_directory_path() / "fdl_verify_cifar";
    fs::create_directories(dir);
    bool pass = true;
    std::ostringstream detail;
    try {
        Rng rng(0xc1fa);
        std::vector<Tensor> images;
        std::vector<int> labels;
        for (int i = 0; i < 3; ++i) {
            Tensor img({32, 32, 3});
            for (std::size_t k = 0; k < img.size(); ++k)
                img[k] = static_cast<double>(rng.uniform_int(0, 255)) / 255.0;
            images.push_back(img);
            labels.push_back(i % 10);
        }
        fs::path batch = dir / "data_batch_1.bin";
        write_cifar10_batch(images, labels, batch.string());
        std::ifstream is(batch, std::ios::binary);
        std::vector<char> original((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
        Dataset ds = load_cifar10(dir.string(), 0);
        fs::path rt = dir / "roundtrip.bin";
        // reloaded images serialize back to the identical bytes
        write_cifar10_batch(ds.images, ds.labels, rt.string());
        std::ifstream is2(rt, std::ios::binary);
        std::vector<char> reloaded((std::istreambuf_iterator<char>(is2)),
                                   std::istreambuf_iterator<char>());
        if (original != reloaded) {
            pass = false;
            detail << "round-trip bytes differ; ";
        }
        // truncated tail must be rejected
        {
            fs::path bad_dir = dir / "bad";
            fs::create_directories(bad_dir);
            std::ofstream os(bad_dir / "data_batch_1.bin", std::ios::binary);
            os.write(original.data(), static_cast<std::streamsize>(original.size()));
            std::vector<char> tail(3072, 0);
            os.write(tail.data(), 3072);
            os.close();
            try {
                load_cifar10(bad_dir.string(), 0);
                pass = false;
                detail << "truncated file accepted; ";
            } catch (const FormatError&) {
            }
        }
        // label byte > 9 must be rejected
        {
            fs::path bad_dir = dir / "badlabel";
            fs::create_directories(bad_dir);
            std::vector<char> bytes = original;
            bytes[0] = 11;
            std::ofstream os(bad_dir / "data_batch_1.bin", std::ios::binary);
            os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
            os.close();
            try {
                load_cifar10(bad_dir.string(), 0);
                pass = false;
                detail << "label 11 accepted; ";
            } catch (const FormatError&) {
            }
        }
    } catch (const std::exception& e) {
        pass = false;
        detail << "unexpected error: " << e.what();
    }
    fs::remove_all(dir);
    if (pass) detail << "lossless round-trip; malformed files rejected";
    return {"format-fidelity", pass, detail.str()};
}

std::vector<CheckResult> run_fast_checks() {
    return {check_oracle_equivalence(), check_loss_bounds(),    check_mask_semantics(),
            check_softmax_simplex(),    check_format_fidelity(), check_gradient_fidelity()};
}

}  // namespace fdl::verify
