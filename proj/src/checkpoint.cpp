#include "randsac/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "randsac/errors.hpp"

namespace randsac {

namespace {

constexpr char kMagic[8] = {'R', 'S', 'A', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint: truncated file");
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_pod(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const auto n = read_pod<std::uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw DataError("checkpoint: truncated string");
    return s;
}

void write_config(std::ostream& os, const ModelConfig& c) {
    for (int v : {c.dim, c.heads, c.layers_enc, c.layers_dec, c.mlp_ratio, c.patch, c.grid_h, c.grid_w, c.channels})
        write_pod(os, static_cast<std::int32_t>(v));
}

ModelConfig read_config(std::istream& is) {
    ModelConfig c;
    for (int* v : {&c.dim, &c.heads, &c.layers_enc, &c.layers_dec, &c.mlp_ratio, &c.patch, &c.grid_h, &c.grid_w,
                   &c.channels})
        *v = read_pod<std::int32_t>(is);
    return c;
}

}  // namespace

void save_checkpoint(ModelState<float>& state, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("checkpoint: cannot open " + tmp + " for writing");
        os.write(kMagic, sizeof(kMagic));
        write_pod(os, kVersion);
        write_config(os, state.cfg);
        std::uint32_t count = 0;
        state.for_each_param([&](const std::string&, Parameter<float>&) { ++count; });
        write_pod(os, count);
        state.for_each_param([&](const std::string& name, Parameter<float>& p) {
            write_string(os, name);
            write_pod(os, static_cast<std::uint32_t>(p.value.rank()));
            for (auto d : p.value.shape) write_pod(os, static_cast<std::int64_t>(d));
            os.write(reinterpret_cast<const char*>(p.value.data.data()),
                     static_cast<std::streamsize>(p.value.data.size() * sizeof(float)));
        });
        if (!os) throw DataError("checkpoint: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

ModelState<float> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
    const ModelConfig cfg = read_config(is);
    Rng rng(0);
    ModelState<float> state = ModelState<float>::init(cfg, rng);
    const auto count = read_pod<std::uint32_t>(is);
    std::uint32_t expected = 0;
    state.for_each_param([&](const std::string&, Parameter<float>&) { ++expected; });
    if (count != expected)
        throw DataError("checkpoint: parameter count mismatch (file " + std::to_string(count) + ", model " +
                        std::to_string(expected) + ")");
    state.for_each_param([&](const std::string& name, Parameter<float>& p) {
        const std::string fname = read_string(is);
        if (fname != name) throw DataError("checkpoint: parameter order mismatch at '" + fname + "'");
        const auto rank = read_pod<std::uint32_t>(is);
        Shape shape(rank);
        for (auto& d : shape) d = read_pod<std::int64_t>(is);
        if (shape != p.value.shape)
            throw DataError("checkpoint: shape mismatch for '" + name + "': file " + shape_str(shape) + " vs model " +
                            shape_str(p.value.shape));
        is.read(reinterpret_cast<char*>(p.value.data.data()),
                static_cast<std::streamsize>(p.value.data.size() * sizeof(float)));
        if (!is) throw DataError("checkpoint: truncated tensor data for '" + name + "'");
    });
    return state;
}

std::uint64_t parameter_checksum(ModelState<float>& state) {
    std::uint64_t h = 1469598103934665603ull;
    state.for_each_param([&](const std::string&, Parameter<float>& p) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data.data());
        for (std::size_t i = 0; i < p.value.data.size() * sizeof(float); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    });
    return h;
}

}  // namespace randsac
