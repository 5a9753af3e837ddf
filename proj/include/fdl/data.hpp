#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdl/tensor.hpp"

namespace fdl {

/// In-memory dataset: images as [h,w,c] tensors in [0,1], integer labels and
/// disjoint train/val/test index lists covering every image.
struct Dataset {
    std::vector<Tensor> images;
    std::vector<int> labels;
    int n_classes = 0;
    std::vector<int> train_idx, val_idx, test_idx;
    std::vector<std::string> class_names;

    int height() const { return images.empty() ? 0 : images[0].extent(0); }
    int width() const { return images.empty() ? 0 : images[0].extent(1); }
    int channels() const { return images.empty() ? 0 : images[0].extent(2); }
    void validate() const;
};

/// Seeded-shuffle split into 60% train / 20% val / rest test.
void assign_splits(Dataset& ds, std::uint64_t split_seed);

/// Structured-text record of the split: the seed and the three index lists.
void write_split_manifest(const Dataset& ds, std::uint64_t split_seed, const std::string& path);

/// Loads every "*.bin" batch in `dir` (sorted by name). Records are 3073
/// bytes: one label byte (0-9) then 3072 pixels channel-planar (1024 R,
/// 1024 G, 1024 B), each plane row-major; pixels scale by 1/255.
Dataset load_cifar10(const std::string& dir, std::uint64_t split_seed);

/// Inverse of the record layout above; round-trips losslessly.
void write_cifar10_batch(const std::vector<Tensor>& images, const std::vector<int>& labels,
                         const std::string& path);

/// Loads a raw directory dataset: one class per subdirectory of binary P6
/// pixmaps, class order = sorted subdirectory names.
Dataset load_ppm_dir(const std::string& dir, std::uint64_t split_seed);

/// Keeps exactly k train samples per class (seeded, without replacement);
/// val/test untouched.
Dataset subsample(const Dataset& ds, int k_per_class, std::uint64_t seed);

/// Synthetic 2-class diversity testbed. Class-1 images carry two spatially
/// disjoint glyphs (cross upper-left, ring lower-right, each jittered +-2 px)
/// on a noisy background; class-0 images carry neither. Either glyph alone
/// separates the classes, so diverse models can split them.
Dataset make_two_patch(int n_per_class, int image_size, std::uint64_t seed);

// --- binary P6 pixmaps (shared with heatmap export) ---
struct PpmImage {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> rgb;  // 3 bytes per pixel, row-major
};
void write_ppm(const PpmImage& img, const std::string& path);
PpmImage read_ppm(const std::string& path);

/// P6 pixels scaled by 1/255 into an [h,w,3] tensor.
Tensor ppm_to_tensor(const PpmImage& img);
/// Rounds [0,1] values back to bytes; 1- and 3-channel images accepted.
PpmImage tensor_to_ppm(const Tensor& image);

}  // namespace fdl
