#include "fdl/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "fdl/cam.hpp"
#include "fdl/checkpoint.hpp"
#include "fdl/config.hpp"
#include "fdl/verify.hpp"

namespace fs = std::filesystem;

namespace fdl {
namespace {

struct Overrides {
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
    bool workers_set = false;
    bool no_distance = false;
};

void apply_overrides(RunConfig& cfg, const Overrides& ov) {
    if (!ov.out.empty()) cfg.out_dir = ov.out;
    if (ov.seed_set) cfg.rng_seed = ov.seed;
    if (ov.workers_set) cfg.workers = ov.workers;
    if (ov.no_distance) cfg.distance_enabled = false;
}

std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::optional<std::uint64_t> model_seed(const EnsembleConfig& cfg, int i) {
    switch (cfg.init_strategy) {
        case InitStrategy::None: return std::nullopt;
        case InitStrategy::Same: return cfg.init_seeds.at(0);
        case InitStrategy::Different: return cfg.init_seeds.at(static_cast<std::size_t>(i));
    }
    return std::nullopt;
}

const std::vector<int>& split_indices(const Dataset& ds, const std::string& split) {
    if (split == "train") return ds.train_idx;
    if (split == "val") return ds.val_idx;
    if (split == "test") return ds.test_idx;
    throw ConfigError("split must be train, val or test, got '" + split + "'");
}

int do_train(const std::string& config_path, const Overrides& ov) {
    if (config_path.empty())
        throw ConfigError("missing required option --config (or FDL_CONFIG)");
    RunConfig cfg = RunConfig::load(config_path);
    apply_overrides(cfg, ov);
    Dataset ds = cfg.load_dataset();
    EnsembleConfig ecfg = cfg.ensemble_config(ds);

    fs::create_directories(cfg.out_dir);
    fs::path out(cfg.out_dir);
    {
        std::ofstream os(out / "config.resolved", std::ios::trunc);
        if (!os) throw IoError("cannot write " + (out / "config.resolved").string());
        os << cfg.resolved_text();
    }
    write_split_manifest(ds, cfg.split_seed, (out / "splits.manifest").string());
    std::ofstream metrics(out / "metrics.log", std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + (out / "metrics.log").string());

    TrainResult result = train(ecfg, ds, &metrics);

    TrainManifest man;
    man.m = ecfg.m;
    man.best_epoch = result.record.best_epoch;
    man.config_hash = cfg.config_hash();
    for (int i = 0; i < ecfg.m; ++i) {
        std::string file = "model_" + std::to_string(i) + ".ckpt";
        save_checkpoint(Checkpoint::from_model(ecfg.arch, model_seed(ecfg, i),
                                               result.best_models[static_cast<std::size_t>(i)]),
                        (out / file).string());
        man.model_files.push_back(file);
    }
    man.save((out / "ensemble.manifest").string());

    std::cout << "trained m=" << ecfg.m << " epochs=" << ecfg.epochs
              << " best_epoch=" << result.record.best_epoch
              << " best_val_acc=" << fmt6(result.record.best_val_acc_mean)
              << " wall_s=" << fmt6(result.record.wall_time_s) << "\n"
              << "artifacts in " << out.string() << "\n";
    return 0;
}

struct LoadedEnsemble {
    fs::path dir;
    TrainManifest man;
    RunConfig cfg;
    Dataset ds;
    std::vector<LayerGraph> bases;
};

LoadedEnsemble load_ensemble(const std::string& manifest_path) {
    fs::path mp(manifest_path);
    if (!fs::exists(mp)) throw IoError("manifest not found: " + manifest_path);
    LoadedEnsemble le;
    le.dir = mp.parent_path();
    le.man = TrainManifest::load(mp.string());
    le.cfg = RunConfig::load((le.dir / le.man.config_file).string());
    le.ds = le.cfg.load_dataset();
    for (const auto& file : le.man.model_files) {
        fs::path p = le.dir / file;
        if (!fs::exists(p)) throw IoError("missing checkpoint file: " + p.string());
        le.bases.push_back(model_from_checkpoint(load_checkpoint(p.string())));
    }
    return le;
}

Checkpoint head_checkpoint(const LayerGraph& head, const Shape& input_shape, int n_classes) {
    Checkpoint ck;
    ck.family_code = Checkpoint::kGenericFamily;
    ck.input_h = input_shape[0];
    ck.input_w = input_shape[1];
    ck.input_c = input_shape[2];
    ck.n_classes = n_classes;
    for (const auto& [name, t] : head.params()) ck.params.emplace(name, t.clone());
    return ck;
}

int do_fuse_eval(const std::string& manifest_path, const std::string& method_str,
                 const std::string& split, bool force_retrain) {
    LoadedEnsemble le = load_ensemble(manifest_path);
    FusionSpec spec = le.cfg.fusion_spec();
    if (!method_str.empty()) spec.method = fusion_method_from_string(method_str);
    std::string mname = to_string(spec.method);
    split_indices(le.ds, split);  // validate early

    EnsembleModel ens;
    if (method_needs_head(spec.method)) {
        fs::path head_file = le.dir / ("head_" + mname + ".ckpt");
        fs::path fman_file = le.dir / ("fusion_" + mname + ".manifest");
        if (!force_retrain && fs::exists(head_file) && fs::exists(fman_file)) {
            FusionManifest fman = FusionManifest::load(fman_file.string());
            spec.head = head_kind_from_string(fman.head_kind);
            Checkpoint ck = load_checkpoint((le.dir / fman.head_file).string());
            int single_depth = le.bases[0].last_conv_shape()[2];
            LayerGraph head = make_head({ck.input_h, ck.input_w, ck.input_c}, spec, single_depth,
                                        ck.n_classes, 0);
            load_params_into(head, ck);
            ens.n_classes = le.bases[0].n_classes();
            ens.bases = std::move(le.bases);
            ens.spec = spec;
            ens.head = std::move(head);
        } else {
            ens = train_head(std::move(le.bases), spec, le.ds, le.cfg.rng_seed);
            Shape in_shape = head_input_shape(ens.bases, spec.method);
            save_checkpoint(head_checkpoint(*ens.head, in_shape, ens.n_classes),
                            head_file.string());
            FusionManifest fman;
            fman.method = mname;
            fman.head_kind = to_string(spec.head);
            fman.head_file = head_file.filename().string();
            fman.base_manifest = fs::path(manifest_path).filename().string();
            fman.save(fman_file.string());
        }
    } else {
        ens = train_head(std::move(le.bases), spec, le.ds, le.cfg.rng_seed);
    }

    EvalReport rep = evaluate_ensemble(ens, le.ds, split_indices(le.ds, split));
    std::ostringstream report;
    report << "method=" << mname << "\n";
    std::string all_methods;
    for (const auto& n : fusion_method_names()) all_methods += (all_methods.empty() ? "" : ",") + n;
    report << "methods=" << all_methods << "\n";
    report << "split=" << split << "\n";
    report << "overall=" << fmt6(rep.overall) << "\n";
    for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
        std::string name = c < le.ds.class_names.size() ? le.ds.class_names[c]
                                                        : "class" + std::to_string(c);
        report << "class_" << c << "=" << fmt6(rep.per_class[c]) << " # " << name << " ("
               << rep.class_counts[c] << " samples)\n";
    }
    fs::path report_file = le.dir / ("eval_" + mname + "_" + split + ".txt");
    {
        std::ofstream os(report_file, std::ios::trunc);
        if (!os) throw IoError("cannot write " + report_file.string());
        os << report.str();
    }
    std::cout << report.str() << "report written to " << report_file.string() << "\n";
    return 0;
}

int do_cam(const std::string& manifest_path, int image_index, const std::string& image_file,
           int class_id, bool blend, const std::string& out_override) {
    LoadedEnsemble le = load_ensemble(manifest_path);
    Tensor image;
    std::string stem;
    if (!image_file.empty()) {
        Tensor rgb = ppm_to_tensor(read_ppm(image_file));
        int want_c = le.bases[0].input_shape()[2];
        if (want_c == 3) {
            image = rgb;
        } else if (want_c == 1) {
            // collapse to luminance for single-channel models
            image = Tensor({rgb.extent(0), rgb.extent(1), 1});
            for (int p = 0; p < rgb.extent(0) * rgb.extent(1); ++p)
                image[static_cast<std::size_t>(p)] =
                    (rgb[static_cast<std::size_t>(p) * 3] + rgb[static_cast<std::size_t>(p) * 3 + 1] +
                     rgb[static_cast<std::size_t>(p) * 3 + 2]) / 3.0;
        } else {
            throw ConfigError("model expects " + std::to_string(want_c) + " channels");
        }
        stem = fs::path(image_file).stem().string();
    } else {
        if (image_index < 0 ||
            static_cast<std::size_t>(image_index) >= le.ds.test_idx.size())
            throw ConfigError("image index " + std::to_string(image_index) +
                              " out of range for test split of size " +
                              std::to_string(le.ds.test_idx.size()));
        image = le.ds.images[static_cast<std::size_t>(
            le.ds.test_idx[static_cast<std::size_t>(image_index)])];
        stem = "img" + std::to_string(image_index);
    }

    fs::path out = out_override.empty() ? le.dir : fs::path(out_override);
    fs::create_directories(out);

    std::vector<HeatMap> maps;
    for (std::size_t i = 0; i < le.bases.size(); ++i) {
        const LayerGraph& model = le.bases[i];
        int cls = class_id >= 0 ? class_id : predict_class(model, image);
        HeatMap hm = grad_cam(model, image, cls);
        hm.source_model = static_cast<int>(i);
        fs::path file = out / (stem + "_model" + std::to_string(i) + "_class" +
                               std::to_string(cls) + ".ppm");
        export_heatmap(hm, blend ? &image : nullptr, file.string());
        maps.push_back(std::move(hm));
        std::cout << "wrote " << file.string() << "\n";
    }
    std::string line;
    if (maps.size() >= 2) {
        line = "overlap q=0.75 value=" + fmt6(overlap(maps, 0.75));
    } else {
        line = "overlap q=0.75 value=n/a (single model)";
    }
    std::cout << line << "\n";
    std::ofstream os(out / (stem + "_overlap.txt"), std::ios::trunc);
    os << line << "\n";
    return 0;
}

int do_verify() {
    auto results = verify::run_fast_checks();
    bool all = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        all = all && r.pass;
    }
    std::cout << (all ? "verify: all checks passed\n" : "verify: FAILURES present\n");
    return all ? 0 : 1;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
    CLI::App app{"fdl - CNN ensembles trained under a feature distance loss"};
    app.require_subcommand(1);

    Overrides ov;
    std::string config_path;
    app.add_option("--config", config_path, "run configuration file (key=value lines)")
        ->envname("FDL_CONFIG");
    app.add_option("--out", ov.out, "output directory override")->envname("FDL_OUT");
    auto* seed_opt = app.add_option("--seed", ov.seed, "rng_seed override")->envname("FDL_SEED");
    auto* workers_opt =
        app.add_option("--workers", ov.workers, "per-model worker threads")->envname("FDL_WORKERS");
    app.add_flag("--no-distance-loss", ov.no_distance, "force distance_enabled=false");

    auto* cmd_train = app.add_subcommand("train", "jointly train the base-model ensemble");
    cmd_train->fallthrough();

    std::string manifest, method, split = "test";
    auto* cmd_fuse =
        app.add_subcommand("fuse", "train an ensemble head for a method and report accuracy");
    cmd_fuse->fallthrough();
    cmd_fuse->add_option("--manifest", manifest, "ensemble.manifest from train")->required();
    cmd_fuse->add_option("--method", method,
                         "ensemble method: concat_fusion, addition_fusion, trainable_fusion, "
                         "pooling_approach, hard_vote, soft_vote, stacking");
    cmd_fuse->add_option("--split", split, "evaluation split: train|val|test");

    auto* cmd_eval = app.add_subcommand("eval", "evaluate an ensemble method (reuses saved heads)");
    cmd_eval->fallthrough();
    cmd_eval->add_option("--manifest", manifest, "ensemble.manifest from train")->required();
    cmd_eval->add_option("--method", method, "ensemble method (see fuse)");
    cmd_eval->add_option("--split", split, "evaluation split: train|val|test");

    int image_index = -1, class_id = -1;
    std::string image_file, cam_out;
    bool no_blend = false;
    auto* cmd_cam = app.add_subcommand("cam", "Grad-CAM heatmaps per base model plus overlap");
    cmd_cam->fallthrough();
    cmd_cam->add_option("--manifest", manifest, "ensemble.manifest from train")->required();
    cmd_cam->add_option("--image-index", image_index, "index into the test split");
    cmd_cam->add_option("--image-file", image_file, "binary P6 pixmap to explain");
    cmd_cam->add_option("--class", class_id, "class id (default: each model's prediction)");
    cmd_cam->add_flag("--no-blend", no_blend, "write pure heatmaps instead of blending");
    cmd_cam->add_option("--cam-out", cam_out, "heatmap output directory (default: manifest dir)");

    auto* cmd_verify = app.add_subcommand("verify", "run the embedded fast acceptance checks");
    cmd_verify->fallthrough();

    std::reverse(args.begin(), args.end());
    try {
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    ov.seed_set = seed_opt->count() > 0;
    ov.workers_set = workers_opt->count() > 0;

    try {
        if (cmd_train->parsed()) return do_train(config_path, ov);
        if (cmd_fuse->parsed()) return do_fuse_eval(manifest, method, split, true);
        if (cmd_eval->parsed()) return do_fuse_eval(manifest, method, split, false);
        if (cmd_cam->parsed())
            return do_cam(manifest, image_index, image_file, class_id, !no_blend, cam_out);
        if (cmd_verify->parsed()) return do_verify();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(std::move(args));
}

}  // namespace fdl
