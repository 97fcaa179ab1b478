#include <bit>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>

#include "splitlora/error.hpp"
#include "splitlora/lora.hpp"

namespace splitlora {

namespace {
constexpr char kMagic[4] = {'S', 'L', 'R', 'A'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    out.write(bytes, 4);
}

void put_f64(std::ofstream& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    out.write(bytes, 8);
}

std::uint32_t get_u32(std::ifstream& in, const std::filesystem::path& path) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
        throw DataError("load_adapters: truncated file " + path.string());
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    }
    return v;
}

double get_f64(std::ifstream& in, const std::filesystem::path& path) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw DataError("load_adapters: truncated file " + path.string());
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}
}  // namespace

void save_adapters(const std::filesystem::path& path, const AdapterSet& set) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("save_adapters: cannot open " + path.string());
    }
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(set.size()));
    for (const LoraAdapter& ad : set.adapters) {
        put_u32(out, ad.site_id);
        put_u32(out, static_cast<std::uint32_t>(ad.in_dim()));
        put_u32(out, static_cast<std::uint32_t>(ad.out_dim()));
        put_u32(out, static_cast<std::uint32_t>(ad.rank()));
        put_f64(out, ad.alpha);
        for (double v : ad.a.entries()) {
            put_f64(out, v);
        }
        for (double v : ad.b.entries()) {
            put_f64(out, v);
        }
    }
    if (!out) {
        throw DataError("save_adapters: write failed on " + path.string());
    }
}

AdapterSet load_adapters(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("load_adapters: cannot open " + path.string());
    }
    char magic[4];
    if (!in.read(magic, 4) || magic[0] != 'S' || magic[1] != 'L' || magic[2] != 'R' ||
        magic[3] != 'A') {
        throw DataError("load_adapters: bad magic in " + path.string());
    }
    const std::uint32_t version = get_u32(in, path);
    if (version != kVersion) {
        throw DataError("load_adapters: unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = get_u32(in, path);
    AdapterSet set;
    for (std::uint32_t n = 0; n < count; ++n) {
        const std::uint32_t site_id = get_u32(in, path);
        const std::uint32_t d = get_u32(in, path);
        const std::uint32_t m = get_u32(in, path);
        const std::uint32_t r = get_u32(in, path);
        if (d == 0 || m == 0 || r == 0 || r > std::min(d, m)) {
            throw DataError("load_adapters: invalid adapter header in " + path.string());
        }
        LoraAdapter ad;
        ad.site_id = site_id;
        ad.alpha = get_f64(in, path);
        ad.a = Matrix(d, r);
        for (std::size_t i = 0; i < ad.a.size(); ++i) {
            ad.a.data()[i] = get_f64(in, path);
        }
        ad.b = Matrix(r, m);
        for (std::size_t i = 0; i < ad.b.size(); ++i) {
            ad.b.data()[i] = get_f64(in, path);
        }
        set.insert(std::move(ad));
    }
    in.peek();
    if (!in.eof()) {
        throw DataError("load_adapters: trailing bytes in " + path.string());
    }
    return set;
}

}  // namespace splitlora
