#include "fdl/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fdl {

namespace {
std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config key '" + key + "' expects true/false, got '" + value + "'");
}

void parse_rational(const std::string& key, const std::string& value, int& num, int& den) {
    std::size_t slash = value.find('/');
    if (slash == std::string::npos) {
        num = static_cast<int>(parse_int(key, value));
        den = 1;
    } else {
        num = static_cast<int>(parse_int(key, value.substr(0, slash)));
        den = static_cast<int>(parse_int(key, value.substr(slash + 1)));
    }
    if (num <= 0 || den <= 0)
        throw ConfigError("config key '" + key + "' expects a positive rational, got '" + value + "'");
}
}  // namespace

std::map<std::string, std::string> read_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected key=value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw FormatError(path + ":" + std::to_string(line_no) + ": empty key");
        if (kv.count(key))
            throw FormatError(path + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        kv[key] = value;
    }
    return kv;
}

void write_kv_file(const std::vector<std::pair<std::string, std::string>>& entries,
                   const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open file for writing: " + path);
    for (const auto& [k, v] : entries) os << k << "=" << v << "\n";
    if (!os) throw IoError("write failed: " + path);
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig RunConfig::load(const std::string& path) {
    auto kv = read_kv_file(path);
    RunConfig c;
    auto take = [&kv](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };

    if (auto v = take("dataset")) c.dataset = *v;
    if (auto v = take("dataset_dir")) c.dataset_dir = *v;
    if (auto v = take("split_seed")) c.split_seed = parse_u64("split_seed", *v);
    if (auto v = take("k_per_class")) c.k_per_class = static_cast<int>(parse_int("k_per_class", *v));
    if (auto v = take("two_patch_n")) c.two_patch_n = static_cast<int>(parse_int("two_patch_n", *v));
    if (auto v = take("two_patch_size"))
        c.two_patch_size = static_cast<int>(parse_int("two_patch_size", *v));
    if (auto v = take("arch")) c.arch = *v;
    if (auto v = take("width_scale")) parse_rational("width_scale", *v, c.width_num, c.width_den);
    if (auto v = take("m")) c.m = static_cast<int>(parse_int("m", *v));
    if (auto v = take("init_strategy")) c.init_strategy = *v;
    if (auto v = take("init_seeds")) {
        c.init_seeds.clear();
        for (const auto& s : split_list(*v)) c.init_seeds.push_back(parse_u64("init_seeds", s));
    }
    if (auto v = take("distance_kind")) c.distance_kind = *v;
    if (auto v = take("alpha")) c.alpha = parse_double("alpha", *v);
    if (auto v = take("beta")) c.beta = parse_double("beta", *v);
    if (auto v = take("epsilon")) c.epsilon = parse_double("epsilon", *v);
    if (auto v = take("distance_enabled")) c.distance_enabled = parse_bool("distance_enabled", *v);
    if (auto v = take("epochs")) c.epochs = static_cast<int>(parse_int("epochs", *v));
    if (auto v = take("learning_rate")) c.learning_rate = parse_double("learning_rate", *v);
    if (auto v = take("batch_size")) c.batch_size = static_cast<int>(parse_int("batch_size", *v));
    if (auto v = take("optimizer")) c.optimizer = *v;
    if (auto v = take("augmentation")) {
        c.augmentation.clear();
        if (*v != "none") c.augmentation = split_list(*v);
    }
    if (auto v = take("rng_seed")) c.rng_seed = parse_u64("rng_seed", *v);
    if (auto v = take("eval_limit")) c.eval_limit = static_cast<int>(parse_int("eval_limit", *v));
    if (auto v = take("workers")) c.workers = static_cast<int>(parse_int("workers", *v));
    if (auto v = take("fusion_method")) c.fusion_method = *v;
    if (auto v = take("head")) c.head = *v;
    if (auto v = take("head_epochs")) c.head_epochs = static_cast<int>(parse_int("head_epochs", *v));
    if (auto v = take("head_lr")) c.head_lr = parse_double("head_lr", *v);
    if (auto v = take("head_batch")) c.head_batch = static_cast<int>(parse_int("head_batch", *v));
    if (auto v = take("out_dir")) c.out_dir = *v;

    if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");
    return c;
}

std::string RunConfig::resolved_text() const {
    std::vector<std::pair<std::string, std::string>> e;
    e.emplace_back("dataset", dataset);
    e.emplace_back("dataset_dir", dataset_dir);
    e.emplace_back("split_seed", std::to_string(split_seed));
    e.emplace_back("k_per_class", std::to_string(k_per_class));
    e.emplace_back("two_patch_n", std::to_string(two_patch_n));
    e.emplace_back("two_patch_size", std::to_string(two_patch_size));
    e.emplace_back("arch", arch);
    e.emplace_back("width_scale", std::to_string(width_num) + "/" + std::to_string(width_den));
    e.emplace_back("m", std::to_string(m));
    e.emplace_back("init_strategy", init_strategy);
    std::string seeds;
    for (auto s : init_seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
    e.emplace_back("init_seeds", seeds);
    e.emplace_back("distance_kind", distance_kind);
    e.emplace_back("alpha", fmt_double(alpha));
    e.emplace_back("beta", fmt_double(beta));
    e.emplace_back("epsilon", fmt_double(epsilon));
    e.emplace_back("distance_enabled", distance_enabled ? "true" : "false");
    e.emplace_back("epochs", std::to_string(epochs));
    e.emplace_back("learning_rate", fmt_double(learning_rate));
    e.emplace_back("batch_size", std::to_string(batch_size));
    e.emplace_back("optimizer", optimizer);
    std::string aug;
    for (const auto& a : augmentation) aug += (aug.empty() ? "" : ",") + a;
    e.emplace_back("augmentation", aug.empty() ? "none" : aug);
    e.emplace_back("rng_seed", std::to_string(rng_seed));
    e.emplace_back("eval_limit", std::to_string(eval_limit));
    e.emplace_back("workers", std::to_string(workers));
    e.emplace_back("fusion_method", fusion_method);
    e.emplace_back("head", head);
    e.emplace_back("head_epochs", std::to_string(head_epochs));
    e.emplace_back("head_lr", fmt_double(head_lr));
    e.emplace_back("head_batch", std::to_string(head_batch));
    e.emplace_back("out_dir", out_dir);
    std::string text;
    for (const auto& [k, v] : e) text += k + "=" + v + "\n";
    return text;
}

Dataset RunConfig::load_dataset() const {
    Dataset ds;
    if (dataset == "two_patch") {
        ds = make_two_patch(two_patch_n, two_patch_size, split_seed);
    } else if (dataset == "cifar10") {
        if (dataset_dir.empty())
            throw ConfigError("config key 'dataset_dir' is required for dataset=cifar10");
        ds = load_cifar10(dataset_dir, split_seed);
    } else if (dataset == "ppm_dir") {
        if (dataset_dir.empty())
            throw ConfigError("config key 'dataset_dir' is required for dataset=ppm_dir");
        ds = load_ppm_dir(dataset_dir, split_seed);
    } else {
        throw ConfigError("config key 'dataset' must be two_patch, cifar10 or ppm_dir, got '" +
                          dataset + "'");
    }
    if (k_per_class > 0) ds = subsample(ds, k_per_class, split_seed);
    return ds;
}

EnsembleConfig RunConfig::ensemble_config(const Dataset& ds) const {
    EnsembleConfig cfg;
    cfg.m = m;
    cfg.arch.family = arch_family_from_string(arch);
    cfg.arch.width_num = width_num;
    cfg.arch.width_den = width_den;
    cfg.arch.input_h = ds.height();
    cfg.arch.input_w = ds.width();
    cfg.arch.input_c = ds.channels();
    cfg.arch.n_classes = ds.n_classes;
    cfg.init_strategy = init_strategy_from_string(init_strategy);
    cfg.init_seeds = init_seeds;
    cfg.distance.kind = distance_kind_from_string(distance_kind);
    cfg.distance.alpha = alpha;
    cfg.distance.beta = beta;
    cfg.distance.epsilon = epsilon;
    cfg.distance_enabled = distance_enabled;
    cfg.epochs = epochs;
    cfg.learning_rate = learning_rate;
    cfg.batch_size = batch_size;
    cfg.optimizer = optimizer_from_string(optimizer);
    for (const auto& a : augmentation)
        cfg.augmentation.enabled.insert(aug_kind_from_string(a));
    cfg.rng_seed = rng_seed;
    cfg.eval_limit = eval_limit;
    cfg.workers = workers;
    cfg.validate();
    return cfg;
}

FusionSpec RunConfig::fusion_spec() const {
    FusionSpec spec;
    spec.method = fusion_method_from_string(fusion_method);
    spec.head = head_kind_from_string(head);
    spec.head_epochs = head_epochs;
    spec.head_lr = head_lr;
    spec.head_batch = head_batch;
    spec.eval_limit = eval_limit;
    return spec;
}

// ---------------------------------------------------------------------------
// manifests
// ---------------------------------------------------------------------------

void TrainManifest::save(const std::string& path) const {
    std::vector<std::pair<std::string, std::string>> e;
    e.emplace_back("type", "ensemble");
    e.emplace_back("m", std::to_string(m));
    for (std::size_t i = 0; i < model_files.size(); ++i)
        e.emplace_back("model_" + std::to_string(i), model_files[i]);
    e.emplace_back("config_hash", config_hash);
    e.emplace_back("best_epoch", std::to_string(best_epoch));
    e.emplace_back("config_file", config_file);
    write_kv_file(e, path);
}

TrainManifest TrainManifest::load(const std::string& path) {
    auto kv = read_kv_file(path);
    if (kv["type"] != "ensemble") throw FormatError("not an ensemble manifest: " + path);
    TrainManifest man;
    man.m = static_cast<int>(parse_int("m", kv.at("m")));
    for (int i = 0; i < man.m; ++i) {
        auto it = kv.find("model_" + std::to_string(i));
        if (it == kv.end()) throw FormatError("manifest missing model_" + std::to_string(i) + ": " + path);
        man.model_files.push_back(it->second);
    }
    man.config_hash = kv.count("config_hash") ? kv.at("config_hash") : "";
    man.best_epoch = kv.count("best_epoch")
                         ? static_cast<int>(parse_int("best_epoch", kv.at("best_epoch")))
                         : 0;
    if (kv.count("config_file")) man.config_file = kv.at("config_file");
    return man;
}

void FusionManifest::save(const std::string& path) const {
    std::vector<std::pair<std::string, std::string>> e;
    e.emplace_back("type", "fusion");
    e.emplace_back("method", method);
    e.emplace_back("head_kind", head_kind);
    e.emplace_back("head_file", head_file);
    e.emplace_back("base_manifest", base_manifest);
    write_kv_file(e, path);
}

FusionManifest FusionManifest::load(const std::string& path) {
    auto kv = read_kv_file(path);
    if (kv["type"] != "fusion") throw FormatError("not a fusion manifest: " + path);
    FusionManifest man;
    man.method = kv.at("method");
    man.head_kind = kv.at("head_kind");
    man.head_file = kv.count("head_file") ? kv.at("head_file") : "";
    man.base_manifest = kv.at("base_manifest");
    return man;
}

}  // namespace fdl
