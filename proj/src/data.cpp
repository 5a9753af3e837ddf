#include "fdl/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fdl/rng.hpp"

namespace fs = std::filesystem;

namespace fdl {

void Dataset::validate() const {
    if (images.size() != labels.size()) throw FormatError("image/label count mismatch");
    std::vector<bool> seen(images.size(), false);
    auto mark = [&](const std::vector<int>& idx) {
        for (int i : idx) {
            if (i < 0 || static_cast<std::size_t>(i) >= images.size() || seen[static_cast<std::size_t>(i)])
                throw FormatError("split index lists are not disjoint over the dataset");
            seen[static_cast<std::size_t>(i)] = true;
        }
    };
    mark(train_idx);
    mark(val_idx);
    mark(test_idx);
    for (bool b : seen)
        if (!b) throw FormatError("split index lists do not cover the dataset");
    for (int l : labels)
        if (l < 0 || l >= n_classes) throw FormatError("label out of range");
    for (const auto& img : images)
        if (img.shape() != images[0].shape()) throw FormatError("non-uniform image shapes");
}

void assign_splits(Dataset& ds, std::uint64_t split_seed) {
    std::vector<int> idx(ds.images.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(split_seed, 0x5e17));
    rng.shuffle(idx);
    std::size_t n = idx.size();
    std::size_t n_train = (n * 6) / 10;
    std::size_t n_val = (n * 2) / 10;
    ds.train_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.val_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                      idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    ds.test_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
}

void write_split_manifest(const Dataset& ds, std::uint64_t split_seed, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write split manifest: " + path);
    auto line = [&os](const char* name, const std::vector<int>& idx) {
        os << name << "=";
        for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? "," : "") << idx[i];
        os << "\n";
    };
    os << "split_seed=" << split_seed << "\n";
    os << "n=" << ds.images.size() << "\n";
    line("train", ds.train_idx);
    line("val", ds.val_idx);
    line("test", ds.test_idx);
    if (!os) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches
// ---------------------------------------------------------------------------

namespace {
constexpr std::size_t kCifarRecord = 3073;
constexpr int kCifarSide = 32;
constexpr std::size_t kCifarPlane = 1024;

const std::vector<std::string> kCifarNames = {"airplane", "automobile", "bird",  "cat",  "deer",
                                              "dog",      "frog",       "horse", "ship", "truck"};
}  // namespace

Dataset load_cifar10(const std::string& dir, std::uint64_t split_seed) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".bin")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw FormatError("no .bin batch files in " + dir);

    Dataset ds;
    ds.n_classes = 10;
    ds.class_names = kCifarNames;
    for (const auto& file : files) {
        std::ifstream is(file, std::ios::binary);
        if (!is) throw IoError("cannot open batch file: " + file.string());
        std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
        if (bytes.empty() || bytes.size() % kCifarRecord != 0)
            throw FormatError("batch file length " + std::to_string(bytes.size()) +
                              " is not a multiple of 3073: " + file.string());
        std::size_t n = bytes.size() / kCifarRecord;
        for (std::size_t r = 0; r < n; ++r) {
            const unsigned char* rec =
                reinterpret_cast<const unsigned char*>(bytes.data()) + r * kCifarRecord;
            int label = rec[0];
            if (label > 9)
                throw FormatError("label byte " + std::to_string(label) + " out of range in " +
                                  file.string());
            Tensor img({kCifarSide, kCifarSide, 3});
            for (int y = 0; y < kCifarSide; ++y)
                for (int x = 0; x < kCifarSide; ++x) {
                    std::size_t p = static_cast<std::size_t>(y) * kCifarSide + x;
                    for (int c = 0; c < 3; ++c)
                        img[(p * 3) + static_cast<std::size_t>(c)] =
                            static_cast<double>(rec[1 + static_cast<std::size_t>(c) * kCifarPlane + p]) / 255.0;
                }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(label);
        }
    }
    assign_splits(ds, split_seed);
    ds.validate();
    return ds;
}

void write_cifar10_batch(const std::vector<Tensor>& images, const std::vector<int>& labels,
                         const std::string& path) {
    if (images.size() != labels.size()) throw ValidationError("image/label count mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open batch file for writing: " + path);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Tensor& img = images[i];
        if (img.shape() != Shape{kCifarSide, kCifarSide, 3})
            throw DimensionError("cifar batch images must be 32x32x3");
        os.put(static_cast<char>(labels[i]));
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < kCifarSide; ++y)
                for (int x = 0; x < kCifarSide; ++x) {
                    double v = img[(static_cast<std::size_t>(y) * kCifarSide + x) * 3 +
                                   static_cast<std::size_t>(c)];
                    os.put(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
                }
    }
    if (!os) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// P6 pixmaps
// ---------------------------------------------------------------------------

void write_ppm(const PpmImage& img, const std::string& path) {
    if (img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw DimensionError("ppm pixel buffer does not match dimensions");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open ppm for writing: " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.rgb.data()),
             static_cast<std::streamsize>(img.rgb.size()));
    if (!os) throw IoError("write failed: " + path);
}

PpmImage read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open ppm: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P6") throw FormatError("not a binary P6 pixmap: " + path);
    auto next_int = [&is, &path]() {
        // skip whitespace and '#' comments
        int c = is.peek();
        while (c == '#' || std::isspace(c)) {
            if (c == '#') is.ignore(1 << 20, '\n');
            else is.get();
            c = is.peek();
        }
        int v;
        if (!(is >> v)) throw FormatError("bad ppm header: " + path);
        return v;
    };
    PpmImage img;
    img.width = next_int();
    img.height = next_int();
    int maxval = next_int();
    if (maxval != 255) throw FormatError("ppm maxval must be 255: " + path);
    is.get();  // single whitespace after maxval
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    if (!is.read(reinterpret_cast<char*>(img.rgb.data()),
                 static_cast<std::streamsize>(img.rgb.size())))
        throw FormatError("truncated ppm payload: " + path);
    return img;
}

Tensor ppm_to_tensor(const PpmImage& img) {
    Tensor t({img.height, img.width, 3});
    for (std::size_t i = 0; i < img.rgb.size(); ++i)
        t[i] = static_cast<double>(img.rgb[i]) / 255.0;
    return t;
}

PpmImage tensor_to_ppm(const Tensor& image) {
    if (image.rank() != 3 || (image.extent(2) != 1 && image.extent(2) != 3))
        throw DimensionError("ppm export needs [h,w,1] or [h,w,3], got " + shape_str(image.shape()));
    PpmImage img;
    img.height = image.extent(0);
    img.width = image.extent(1);
    int c = image.extent(2);
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (std::size_t p = 0; p < static_cast<std::size_t>(img.width) * img.height; ++p)
        for (int ch = 0; ch < 3; ++ch) {
            double v = image[p * static_cast<std::size_t>(c) + static_cast<std::size_t>(c == 3 ? ch : 0)];
            v = std::clamp(v, 0.0, 1.0);
            img.rgb[p * 3 + static_cast<std::size_t>(ch)] =
                static_cast<unsigned char>(std::lround(v * 255.0));
        }
    return img;
}

Dataset load_ppm_dir(const std::string& dir, std::uint64_t split_seed) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.size() < 2) throw FormatError("need at least two class subdirectories in " + dir);

    Dataset ds;
    ds.n_classes = static_cast<int>(class_dirs.size());
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        ds.class_names.push_back(class_dirs[c].filename().string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[c]))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            ds.images.push_back(ppm_to_tensor(read_ppm(f.string())));
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    if (ds.images.empty()) throw FormatError("no images found under " + dir);
    assign_splits(ds, split_seed);
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// subsampling and the synthetic testbed
// ---------------------------------------------------------------------------

Dataset subsample(const Dataset& ds, int k_per_class, std::uint64_t seed) {
    if (k_per_class < 1) throw ConfigError("k_per_class must be >= 1");
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.n_classes));
    for (int i : ds.train_idx) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    Dataset out = ds;
    out.train_idx.clear();
    Rng rng(derive_seed(seed, 0x5ab5));
    for (int c = 0; c < ds.n_classes; ++c) {
        auto& pool = by_class[static_cast<std::size_t>(c)];
        if (static_cast<int>(pool.size()) < k_per_class)
            throw ConfigError("class " + std::to_string(c) + " has only " +
                              std::to_string(pool.size()) + " train samples, need " +
                              std::to_string(k_per_class));
        rng.shuffle(pool);
        pool.resize(static_cast<std::size_t>(k_per_class));
        std::sort(pool.begin(), pool.end());
        out.train_idx.insert(out.train_idx.end(), pool.begin(), pool.end());
    }
    return out;
}

namespace {
void draw_cross(Tensor& img, int cy, int cx, int arm) {
    int h = img.extent(0), w = img.extent(1);
    for (int d = -arm; d <= arm; ++d) {
        int y = cy + d, x = cx + d;
        if (y >= 0 && y < h) img.at({y, cx, 0}) = 1.0;
        if (x >= 0 && x < w) img.at({cy, x, 0}) = 1.0;
    }
}

void draw_ring(Tensor& img, int cy, int cx, double radius) {
    int h = img.extent(0), w = img.extent(1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double dist = std::hypot(y - cy, x - cx);
            if (std::abs(dist - radius) <= 1.2) img.at({y, x, 0}) = 1.0;
        }
}
}  // namespace

Dataset make_two_patch(int n_per_class, int image_size, std::uint64_t seed) {
    if (image_size < 16) throw ConfigError("two_patch image_size must be >= 16");
    if (n_per_class < 1) throw ConfigError("two_patch n_per_class must be >= 1");
    Dataset ds;
    ds.n_classes = 2;
    ds.class_names = {"plain", "glyphs"};
    Rng rng(derive_seed(seed, 0x7a7c));
    int q = image_size / 4;
    for (int cls = 0; cls < 2; ++cls)
        for (int i = 0; i < n_per_class; ++i) {
            Tensor img({image_size, image_size, 1});
            for (std::size_t p = 0; p < img.size(); ++p) img[p] = rng.uniform(0.0, 0.1);
            if (cls == 1) {
                int cy = q + rng.uniform_int(-2, 2);
                int cx = q + rng.uniform_int(-2, 2);
                draw_cross(img, cy, cx, 2);
                int ry = 3 * q + rng.uniform_int(-2, 2);
                int rx = 3 * q + rng.uniform_int(-2, 2);
                draw_ring(img, ry, rx, 3.0);
            }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(cls);
        }
    assign_splits(ds, seed);
    ds.validate();
    return ds;
}

}  // namespace fdl
