#include "fdl/cam.hpp"

#include <algorithm>
#include <cmath>

#include "fdl/data.hpp"

namespace fdl {

HeatMap grad_cam(const LayerGraph& model, const Tensor& image, int class_id) {
    if (class_id < 0 || class_id >= model.n_classes())
        throw ValidationError("grad_cam: class id " + std::to_string(class_id) +
                              " out of range for " + std::to_string(model.n_classes()) + " classes");
    Graph g;
    auto fw = model.forward(g, image);
    if (!fw.last_conv.defined())
        throw StateError("grad_cam: model has no convolutional tap");
    fw.last_conv.ensure_grad();
    Tensor score = g.take(fw.logits, static_cast<std::size_t>(class_id));
    g.backward(score);

    const Tensor& act = fw.last_conv;
    int h = act.extent(0), w = act.extent(1), d = act.extent(2);
    const auto& grad = act.grad();
    double inv_hw = 1.0 / (static_cast<double>(h) * w);
    std::vector<double> weights(static_cast<std::size_t>(d), 0.0);
    for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
        for (int c = 0; c < d; ++c)
            weights[static_cast<std::size_t>(c)] += grad[p * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
    for (double& v : weights) v *= inv_hw;

    HeatMap map;
    map.source_model = 0;
    map.class_id = class_id;
    map.values = Tensor({h, w});
    double raw_max = 0.0;
    for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) {
        double acc = 0.0;
        for (int c = 0; c < d; ++c)
            acc += weights[static_cast<std::size_t>(c)] *
                   act[p * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
        double v = std::max(acc, 0.0);
        map.values[p] = v;
        raw_max = std::max(raw_max, v);
    }
    map.raw_max = raw_max;
    if (raw_max > 0.0)
        for (std::size_t p = 0; p < map.values.size(); ++p) map.values[p] /= raw_max;
    return map;
}

namespace {
/// Strictly-above threshold at the q-quantile order statistic; invariant
/// under monotone rescaling of the map.
std::vector<bool> top_region(const Tensor& values, double q) {
    std::vector<double> sorted(values.values());
    std::sort(sorted.begin(), sorted.end());
    std::size_t pos = static_cast<std::size_t>(
        std::floor(q * static_cast<double>(sorted.size() - 1)));
    double threshold = sorted[pos];
    std::vector<bool> kept(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) kept[i] = values[i] > threshold;
    return kept;
}
}  // namespace

double overlap(std::span<const HeatMap> maps, double q) {
    if (maps.size() < 2) throw ValidationError("overlap needs at least 2 heatmaps");
    for (const auto& m : maps)
        if (m.values.shape() != maps[0].values.shape())
            throw DimensionError("overlap: heatmap shapes differ");
    std::vector<std::vector<bool>> regions;
    regions.reserve(maps.size());
    for (const auto& m : maps) regions.push_back(top_region(m.values, q));

    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < regions.size(); ++i)
        for (std::size_t j = i + 1; j < regions.size(); ++j) {
            std::size_t inter = 0, uni = 0;
            for (std::size_t p = 0; p < regions[i].size(); ++p) {
                bool a = regions[i][p], b = regions[j][p];
                inter += (a && b) ? 1 : 0;
                uni += (a || b) ? 1 : 0;
            }
            total += uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
            ++pairs;
        }
    return total / static_cast<double>(pairs);
}

std::array<unsigned char, 3> heat_color(int index) {
    double t = static_cast<double>(index) / 255.0;
    auto channel = [](double v) {
        v = std::clamp(v, 0.0, 1.0);
        return static_cast<unsigned char>(std::lround(v * 255.0));
    };
    return {channel(1.5 - std::abs(4.0 * t - 3.0)), channel(1.5 - std::abs(4.0 * t - 2.0)),
            channel(1.5 - std::abs(4.0 * t - 1.0))};
}

void export_heatmap(const HeatMap& map, const Tensor* image, const std::string& path) {
    int mh = map.values.extent(0), mw = map.values.extent(1);
    int oh = image ? image->extent(0) : mh;
    int ow = image ? image->extent(1) : mw;
    PpmImage out;
    out.height = oh;
    out.width = ow;
    out.rgb.resize(static_cast<std::size_t>(oh) * ow * 3);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            int my = std::min(y * mh / oh, mh - 1);  // nearest-neighbor upscale
            int mx = std::min(x * mw / ow, mw - 1);
            double v = std::clamp(map.values[static_cast<std::size_t>(my) * mw + static_cast<std::size_t>(mx)], 0.0, 1.0);
            auto rgb = heat_color(static_cast<int>(std::lround(v * 255.0)));
            for (int c = 0; c < 3; ++c) {
                double heat = static_cast<double>(rgb[static_cast<std::size_t>(c)]) / 255.0;
                double pix = heat;
                if (image) {
                    int ic = image->extent(2);
                    double base = (*image)[(static_cast<std::size_t>(y) * ow + x) * static_cast<std::size_t>(ic) +
                                           static_cast<std::size_t>(ic == 3 ? c : 0)];
                    pix = 0.5 * heat + 0.5 * base;
                }
                out.rgb[(static_cast<std::size_t>(y) * ow + x) * 3 + static_cast<std::size_t>(c)] =
                    static_cast<unsigned char>(std::lround(std::clamp(pix, 0.0, 1.0) * 255.0));
            }
        }
    write_ppm(out, path);
}

}  // namespace fdl
