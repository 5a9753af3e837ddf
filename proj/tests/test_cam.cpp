#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fdl/cam.hpp"
#include "fdl/data.hpp"
#include "fdl/rng.hpp"
#include "fdl/verify.hpp"

using namespace fdl;
namespace fs = std::filesystem;

namespace {
LayerGraph tiny_model(std::uint64_t seed, int h = 6, int w = 6, int cin = 1, int d = 2,
                      int n = 2) {
    return LayerGraphBuilder({h, w, cin})
        .conv(3, d, 1, Padding::Valid).relu()
        .flatten()
        .dense(n)
        .build(seed);
}

Tensor rand_image(Rng& rng, Shape shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0, 1);
    return t;
}

HeatMap map_of(std::vector<double> v, int h, int w) {
    HeatMap m;
    m.values = Tensor({h, w}, std::move(v));
    m.raw_max = 1.0;
    return m;
}
}  // namespace

TEST_CASE("grad_cam basics") {
    Rng rng(1);
    SUBCASE("unit dense weights make the map relu(A)/max") {
        LayerGraph model = tiny_model(3, 6, 6, 1, 1, 2);
        for (auto& [name, t] : model.params())
            if (name == "dense1.w")
                for (std::size_t i = 0; i < t.size(); ++i) t[i] = (i % 2 == 0) ? 1.0 : 0.0;
        Tensor img = rand_image(rng, {6, 6, 1});
        Graph g;
        auto fw = model.forward(g, img);
        HeatMap map = grad_cam(model, img, 0);
        double mx = 0.0;
        for (std::size_t i = 0; i < fw.last_conv.size(); ++i)
            mx = std::max(mx, fw.last_conv[i]);
        REQUIRE(mx > 0.0);
        for (std::size_t i = 0; i < map.values.size(); ++i)
            CHECK(map.values[i] == doctest::Approx(fw.last_conv[i] / mx).epsilon(1e-12));
    }
    SUBCASE("zero head weights give the all-zero map") {
        LayerGraph model = tiny_model(5);
        for (auto& [name, t] : model.params())
            if (name.rfind("dense", 0) == 0)
                for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.0;
        HeatMap map = grad_cam(model, rand_image(rng, {6, 6, 1}), 1);
        CHECK(map.raw_max == 0.0);
        for (std::size_t i = 0; i < map.values.size(); ++i) CHECK(map.values[i] == 0.0);
    }
    SUBCASE("matches the scalar-loop oracle to 1e-10") {
        for (int it = 0; it < 20; ++it) {
            LayerGraph model = tiny_model(100 + static_cast<std::uint64_t>(it), 7, 6, 2, 3, 3);
            Tensor img = rand_image(rng, {7, 6, 2});
            int cls = it % 3;
            HeatMap got = grad_cam(model, img, cls);
            HeatMap want = verify::ref_grad_cam(model, img, cls);
            CHECK(std::abs(got.raw_max - want.raw_max) <= 1e-10);
            for (std::size_t i = 0; i < got.values.size(); ++i)
                CHECK(std::abs(got.values[i] - want.values[i]) <= 1e-10);
        }
    }
    SUBCASE("invalid class rejected") {
        LayerGraph model = tiny_model(7);
        CHECK_THROWS_AS(grad_cam(model, rand_image(rng, {6, 6, 1}), 2), ValidationError);
    }
    SUBCASE("values live in [0,1]") {
        LayerGraph model = tiny_model(9);
        HeatMap map = grad_cam(model, rand_image(rng, {6, 6, 1}), 0);
        for (std::size_t i = 0; i < map.values.size(); ++i) {
            CHECK(map.values[i] >= 0.0);
            CHECK(map.values[i] <= 1.0);
        }
    }
}

TEST_CASE("overlap") {
    SUBCASE("identical maps give 1.0") {
        Rng rng(2);
        std::vector<double> v(16);
        for (auto& x : v) x = rng.uniform(0, 1);
        std::vector<HeatMap> maps = {map_of(v, 4, 4), map_of(v, 4, 4)};
        CHECK(overlap(maps) == doctest::Approx(1.0));
    }
    SUBCASE("disjoint top-quartiles give 0.0") {
        std::vector<double> a(16, 0.0), b(16, 0.0);
        for (int i = 0; i < 4; ++i) a[static_cast<std::size_t>(i)] = 1.0;
        for (int i = 8; i < 12; ++i) b[static_cast<std::size_t>(i)] = 1.0;
        std::vector<HeatMap> maps = {map_of(a, 4, 4), map_of(b, 4, 4)};
        CHECK(overlap(maps) == doctest::Approx(0.0));
    }
    SUBCASE("half-overlapping regions give 1/3") {
        // 2 shared pixels of a 6-pixel union
        std::vector<double> a(16, 0.0), b(16, 0.0);
        for (int i : {0, 1, 2, 3}) a[static_cast<std::size_t>(i)] = 1.0;
        for (int i : {2, 3, 4, 5}) b[static_cast<std::size_t>(i)] = 1.0;
        std::vector<HeatMap> maps = {map_of(a, 4, 4), map_of(b, 4, 4)};
        CHECK(overlap(maps) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("all-zero maps contribute 0 by convention") {
        std::vector<HeatMap> maps = {map_of(std::vector<double>(16, 0.0), 4, 4),
                                     map_of(std::vector<double>(16, 0.0), 4, 4)};
        CHECK(overlap(maps) == doctest::Approx(0.0));
    }
    SUBCASE("invariant under monotone rescaling and map permutation") {
        Rng rng(3);
        std::vector<double> a(36), b(36), c(36);
        for (auto& x : a) x = rng.uniform(0, 1);
        for (auto& x : b) x = rng.uniform(0, 1);
        for (auto& x : c) x = rng.uniform(0, 1);
        std::vector<HeatMap> maps = {map_of(a, 6, 6), map_of(b, 6, 6), map_of(c, 6, 6)};
        double base = overlap(maps);

        auto squared = a;
        for (auto& x : squared) x = x * x;  // strictly monotone on [0,1]
        std::vector<HeatMap> rescaled = {map_of(squared, 6, 6), map_of(b, 6, 6), map_of(c, 6, 6)};
        CHECK(overlap(rescaled) == doctest::Approx(base));

        std::vector<HeatMap> permuted = {map_of(c, 6, 6), map_of(a, 6, 6), map_of(b, 6, 6)};
        CHECK(overlap(permuted) == doctest::Approx(base));
    }
}

TEST_CASE("grad_cam top region is invariant to positive head rescaling") {
    Rng rng(4);
    LayerGraph model = tiny_model(21, 8, 8, 1, 3, 2);
    Tensor img = rand_image(rng, {8, 8, 1});
    HeatMap before = grad_cam(model, img, 0);
    for (auto& [name, t] : model.params())
        if (name.rfind("dense", 0) == 0)
            for (std::size_t i = 0; i < t.size(); ++i) t[i] *= 3.0;
    HeatMap after = grad_cam(model, img, 0);
    std::vector<HeatMap> pair;
    pair.push_back(std::move(before));
    pair.push_back(std::move(after));
    CHECK(overlap(pair, 0.75) == doctest::Approx(1.0));
}

TEST_CASE("heatmap export") {
    fs::path dir = fs::temp_directory_path() / "fdl_test_cam";
    fs::create_directories(dir);
    SUBCASE("zero map renders to four ramp[0] pixels") {
        HeatMap map = map_of(std::vector<double>(4, 0.0), 2, 2);
        fs::path p = dir / "zero.ppm";
        export_heatmap(map, nullptr, p.string());
        PpmImage img = read_ppm(p.string());
        auto c0 = heat_color(0);
        REQUIRE(img.rgb.size() == 12u);
        for (int px = 0; px < 4; ++px)
            for (int ch = 0; ch < 3; ++ch)
                CHECK(img.rgb[static_cast<std::size_t>(px * 3 + ch)] ==
                      c0[static_cast<std::size_t>(ch)]);
    }
    SUBCASE("value 1.0 maps to ramp[255]") {
        HeatMap map = map_of({1.0, 0.0, 0.0, 0.0}, 2, 2);
        fs::path p = dir / "one.ppm";
        export_heatmap(map, nullptr, p.string());
        PpmImage img = read_ppm(p.string());
        auto c255 = heat_color(255);
        for (int ch = 0; ch < 3; ++ch)
            CHECK(img.rgb[static_cast<std::size_t>(ch)] == c255[static_cast<std::size_t>(ch)]);
    }
    SUBCASE("written files re-parse to identical bytes") {
        Rng rng(5);
        std::vector<double> v(16);
        for (auto& x : v) x = rng.uniform(0, 1);
        HeatMap map = map_of(v, 4, 4);
        fs::path p1 = dir / "a.ppm", p2 = dir / "b.ppm";
        export_heatmap(map, nullptr, p1.string());
        PpmImage img = read_ppm(p1.string());
        write_ppm(img, p2.string());
        std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
        std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(b1 == b2);
    }
    SUBCASE("blended export upscales to the image size") {
        HeatMap map = map_of({0.2, 0.4, 0.6, 0.8}, 2, 2);
        Tensor img({8, 8, 1});
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = 0.5;
        fs::path p = dir / "blend.ppm";
        export_heatmap(map, &img, p.string());
        PpmImage out = read_ppm(p.string());
        CHECK(out.width == 8);
        CHECK(out.height == 8);
    }
    fs::remove_all(dir);
}
