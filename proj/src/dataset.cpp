#include "randsac/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "randsac/errors.hpp"

namespace fs = std::filesystem;

namespace randsac {

void Dataset::validate() const {
    if (images.size() != labels.size()) throw DataError("dataset: image/label count mismatch");
    if (images.empty()) throw DataError("dataset: empty");
    const int h = images.front().h, w = images.front().w, c = images.front().c;
    for (const auto& img : images)
        if (img.h != h || img.w != w || img.c != c) throw DataError("dataset: mixed image dimensions");
    for (int l : labels)
        if (l < 0 || l >= num_classes) throw DataError("dataset: label out of range");
}

Dataset Dataset::subset(int n) const {
    Dataset out;
    out.num_classes = num_classes;
    out.source = source + ":subset" + std::to_string(n);
    const int take = std::min(n, count());
    out.images.assign(images.begin(), images.begin() + take);
    out.labels.assign(labels.begin(), labels.begin() + take);
    return out;
}

Image decode_cifar_pixels(const std::uint8_t* planar) {
    Image img(32, 32, 3);
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < 32; ++r)
            for (int c = 0; c < 32; ++c) img.at(r, c, ch) = planar[ch * 1024 + r * 32 + c] / 255.f;
    return img;
}

void encode_cifar_pixels(const Image& img, std::uint8_t* planar) {
    if (img.h != 32 || img.w != 32 || img.c != 3) throw DataError("encode_cifar_pixels: expects 32x32x3");
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < 32; ++r)
            for (int c = 0; c < 32; ++c)
                planar[ch * 1024 + r * 32 + c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(img.at(r, c, ch), 0.f, 1.f) * 255.f));
}

namespace {

void load_cifar_file(const std::string& path, int label_bytes, int expected_records, Dataset& out) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw DataError("load_cifar: cannot open " + path);
    const std::int64_t record = label_bytes + 3072;
    const std::int64_t size = static_cast<std::int64_t>(f.tellg());
    const std::int64_t expected = record * expected_records;
    if (size != expected)
        throw DataError("load_cifar: " + path + " has " + std::to_string(size) + " bytes, expected " +
                        std::to_string(expected) + " (" + std::to_string(expected_records) + " records of " +
                        std::to_string(record) + " bytes)");
    f.seekg(0);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(record));
    for (int i = 0; i < expected_records; ++i) {
        f.read(reinterpret_cast<char*>(buf.data()), record);
        if (f.gcount() != record) throw DataError("load_cifar: truncated read in " + path);
        // CIFAR-100 records carry coarse then fine label; we keep the fine one.
        out.labels.push_back(buf[static_cast<std::size_t>(label_bytes - 1)]);
        out.images.push_back(decode_cifar_pixels(buf.data() + label_bytes));
    }
}

}  // namespace

Dataset load_cifar(const std::string& dir, const std::string& variant, const std::string& split) {
    Dataset out;
    out.source = variant + ":" + split;
    if (variant == "cifar10") {
        out.num_classes = 10;
        if (split == "train") {
            for (int b = 1; b <= 5; ++b) load_cifar_file(dir + "/data_batch_" + std::to_string(b) + ".bin", 1, 10000, out);
        } else if (split == "test") {
            load_cifar_file(dir + "/test_batch.bin", 1, 10000, out);
        } else {
            throw ConfigError("load_cifar: unknown split '" + split + "'");
        }
    } else if (variant == "cifar100") {
        out.num_classes = 100;
        if (split == "train")
            load_cifar_file(dir + "/train.bin", 2, 50000, out);
        else if (split == "test")
            load_cifar_file(dir + "/test.bin", 2, 10000, out);
        else
            throw ConfigError("load_cifar: unknown split '" + split + "'");
    } else {
        throw ConfigError("load_cifar: unknown variant '" + variant + "'");
    }
    out.validate();
    return out;
}

Dataset load_image_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("load_image_dir: not a directory: " + dir);
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw DataError("load_image_dir: no class subdirectories in " + dir);
    Dataset out;
    out.num_classes = static_cast<int>(class_dirs.size());
    out.source = "dir:" + dir;
    for (std::size_t cls = 0; cls < class_dirs.size(); ++cls) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[cls]))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const std::string ext = f.extension().string();
            if (ext == ".png")
                out.images.push_back(read_png(f.string()));
            else if (ext == ".ppm")
                out.images.push_back(read_ppm(f.string()));
            else
                throw DataError("load_image_dir: unsupported file type " + f.string());
            out.labels.push_back(static_cast<int>(cls));
        }
    }
    out.validate();
    return out;
}

}  // namespace randsac
