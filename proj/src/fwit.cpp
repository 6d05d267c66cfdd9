#include "fwionet/fwit.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fwionet/common.hpp"

static_assert(std::endian::native == std::endian::little, "FWIT I/O assumes a little-endian host");
static_assert(sizeof(float) == 4, "FWIT payload is 32-bit IEEE floats");

namespace fwionet {

namespace {

constexpr char kMagic[4] = {'F', 'W', 'I', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void write_fwit(std::ostream& os, const std::vector<std::size_t>& shape, const float* data) {
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kVersion);
    put<std::uint8_t>(os, kDtypeF32);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(shape.size()));
    std::size_t n = 1;
    for (std::size_t e : shape) {
        put<std::uint64_t>(os, static_cast<std::uint64_t>(e));
        n *= e;
    }
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    if (!os) throw DataError("FWIT write failed");
}

void write_fwit(const std::string& path, const std::vector<std::size_t>& shape, const float* data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for write: " + path);
    write_fwit(os, shape, data);
}

FwitArray read_fwit(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a FWIT stream (bad magic)");
    const auto version = get<std::uint32_t>(is);
    if (version != kVersion) throw DataError("unsupported FWIT version " + std::to_string(version));
    const auto dtype = get<std::uint8_t>(is);
    if (dtype != kDtypeF32) throw DataError("unsupported FWIT dtype code " + std::to_string(dtype));
    const auto ndim = get<std::uint8_t>(is);
    FwitArray out;
    out.shape.resize(ndim);
    std::size_t n = 1;
    for (std::uint8_t i = 0; i < ndim; ++i) {
        out.shape[i] = static_cast<std::size_t>(get<std::uint64_t>(is));
        if (out.shape[i] == 0) throw DataError("FWIT extent must be positive");
        n *= out.shape[i];
    }
    out.data.resize(n);
    is.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw DataError("truncated FWIT payload");
    return out;
}

FwitArray read_fwit(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open for read: " + path);
    return read_fwit(is);
}

}  // namespace fwionet
