#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "fdl/nn.hpp"

namespace fdl {

/// Grad-CAM heatmap over the last convolutional activation, normalized to
/// [0,1] by its own pre-normalization maximum (all-zero when that maximum
/// is 0).
struct HeatMap {
    Tensor values;  // [h,w] in [0,1]
    int source_model = 0;
    int class_id = 0;
    double raw_max = 0.0;
};

/// w_c = spatial mean of d(logit_class)/d(last_conv channel c);
/// map = relu(sum_c w_c * A^c), then guarded max-normalization.
HeatMap grad_cam(const LayerGraph& model, const Tensor& image, int class_id);

/// Mean pairwise IoU of the top-q regions (each map binarized at its own
/// q-quantile, strictly above). An empty pair of regions contributes 0.
double overlap(std::span<const HeatMap> maps, double q = 0.75);

/// The 256-entry color ramp used for export: for t = i/255,
/// r = clamp(1.5 - |4t-3|), g = clamp(1.5 - |4t-2|), b = clamp(1.5 - |4t-1|),
/// each scaled to bytes (a classic blue->cyan->green->yellow->red ramp).
std::array<unsigned char, 3> heat_color(int index);

/// Writes a binary P6 pixmap: the heatmap through the ramp, nearest-neighbor
/// upscaled to the image size and alpha-blended 0.5 over it when an image is
/// given, otherwise rendered at map resolution.
void export_heatmap(const HeatMap& map, const Tensor* image, const std::string& path);

}  // namespace fdl
