#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "fdl/nn.hpp"

namespace fdl {

/// Checkpoint container contents. `family_code` is the on-disk byte: 0-2 map
/// to ArchFamily, 255 marks a generic container (fusion heads) that is not
/// rebuilt from an ArchSpec.
struct Checkpoint {
    static constexpr std::uint32_t kFormatVersion = 1;
    static constexpr std::uint8_t kGenericFamily = 255;

    std::uint8_t family_code = 0;
    int width_num = 1;
    int width_den = 1;
    int input_h = 0;
    int input_w = 0;
    int input_c = 0;
    int n_classes = 0;
    std::optional<std::uint64_t> seed;
    std::map<std::string, Tensor> params;

    ArchSpec arch_spec() const;
    static Checkpoint from_model(const ArchSpec& spec, std::optional<std::uint64_t> seed,
                                 const LayerGraph& model);
};

/// Byte layout (all integers little-endian, doubles IEEE-754 little-endian):
///   magic "FDLCKPT\0" (8 bytes)
///   u32 format_version
///   u8  family_code, u32 width_num, u32 width_den
///   u32 input_h, u32 input_w, u32 input_c, u32 n_classes
///   u8  has_seed, u64 seed (0 when has_seed == 0)
///   u32 tensor_count, then per tensor in name order:
///     u32 name_len, name bytes, u32 rank, u32 extents[rank], f64 payload
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Overwrites a model's parameters with the checkpoint's; the name sets and
/// shapes must match exactly.
void load_params_into(LayerGraph& model, const Checkpoint& ckpt);

/// Rebuilds a family model and overwrites its parameters with the stored
/// ones; parameter names and shapes must match exactly.
LayerGraph model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace fdl
