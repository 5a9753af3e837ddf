#include "fdl/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fdl {

namespace {
constexpr char kMagic[8] = {'F', 'D', 'L', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated checkpoint: " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated checkpoint: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is, const std::string& path) {
    std::uint64_t bits = get_u64(is, path);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}
}  // namespace

ArchSpec Checkpoint::arch_spec() const {
    if (family_code > 2) throw FormatError("checkpoint is not a family model");
    ArchSpec s;
    s.family = static_cast<ArchFamily>(family_code);
    s.width_num = width_num;
    s.width_den = width_den;
    s.input_h = input_h;
    s.input_w = input_w;
    s.input_c = input_c;
    s.n_classes = n_classes;
    return s;
}

Checkpoint Checkpoint::from_model(const ArchSpec& spec, std::optional<std::uint64_t> seed,
                                  const LayerGraph& model) {
    Checkpoint c;
    c.family_code = static_cast<std::uint8_t>(spec.family);
    c.width_num = spec.width_num;
    c.width_den = spec.width_den;
    c.input_h = spec.input_h;
    c.input_w = spec.input_w;
    c.input_c = spec.input_c;
    c.n_classes = spec.n_classes;
    c.seed = seed;
    for (const auto& [name, t] : model.params()) c.params.emplace(name, t.clone());
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    put_u32(os, Checkpoint::kFormatVersion);
    os.put(static_cast<char>(ckpt.family_code));
    put_u32(os, static_cast<std::uint32_t>(ckpt.width_num));
    put_u32(os, static_cast<std::uint32_t>(ckpt.width_den));
    put_u32(os, static_cast<std::uint32_t>(ckpt.input_h));
    put_u32(os, static_cast<std::uint32_t>(ckpt.input_w));
    put_u32(os, static_cast<std::uint32_t>(ckpt.input_c));
    put_u32(os, static_cast<std::uint32_t>(ckpt.n_classes));
    os.put(ckpt.seed ? 1 : 0);
    put_u64(os, ckpt.seed.value_or(0));
    put_u32(os, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (int e : t.shape()) put_u32(os, static_cast<std::uint32_t>(e));
        for (std::size_t i = 0; i < t.size(); ++i) put_f64(os, t[i]);
    }
    if (!os) throw IoError("write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("bad checkpoint magic: " + path);
    std::uint32_t version = get_u32(is, path);
    if (version != Checkpoint::kFormatVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    Checkpoint c;
    int fam = is.get();
    if (fam < 0) throw FormatError("truncated checkpoint: " + path);
    c.family_code = static_cast<std::uint8_t>(fam);
    c.width_num = static_cast<int>(get_u32(is, path));
    c.width_den = static_cast<int>(get_u32(is, path));
    c.input_h = static_cast<int>(get_u32(is, path));
    c.input_w = static_cast<int>(get_u32(is, path));
    c.input_c = static_cast<int>(get_u32(is, path));
    c.n_classes = static_cast<int>(get_u32(is, path));
    int has_seed = is.get();
    if (has_seed < 0) throw FormatError("truncated checkpoint: " + path);
    std::uint64_t seed = get_u64(is, path);
    if (has_seed) c.seed = seed;
    std::uint32_t count = get_u32(is, path);
    for (std::uint32_t t = 0; t < count; ++t) {
        std::uint32_t name_len = get_u32(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw FormatError("truncated checkpoint: " + path);
        std::uint32_t rank = get_u32(is, path);
        Shape shape(rank);
        for (std::uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(get_u32(is, path));
        std::vector<double> values(shape_numel(shape));
        for (double& v : values) v = get_f64(is, path);
        c.params.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    return c;
}

void load_params_into(LayerGraph& model, const Checkpoint& ckpt) {
    auto& params = model.params();
    if (params.size() != ckpt.params.size())
        throw FormatError("checkpoint parameter set does not match the architecture");
    for (auto& [name, t] : params) {
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end()) throw FormatError("checkpoint missing parameter " + name);
        if (it->second.shape() != t.shape())
            throw FormatError("checkpoint parameter " + name + " has mismatched shape");
        t.values() = it->second.values();
    }
}

LayerGraph model_from_checkpoint(const Checkpoint& ckpt) {
    LayerGraph model = build_model(ckpt.arch_spec(), 0);
    load_params_into(model, ckpt);
    return model;
}

}  // namespace fdl
