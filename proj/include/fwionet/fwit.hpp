#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fwionet {

// FWIT tensor file: magic "FWIT", u32 version=1, u8 dtype (0 = f32),
// u8 ndim, ndim x u64 little-endian extents, row-major little-endian payload.
struct FwitArray {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }
};

void write_fwit(std::ostream& os, const std::vector<std::size_t>& shape, const float* data);
void write_fwit(const std::string& path, const std::vector<std::size_t>& shape, const float* data);
FwitArray read_fwit(std::istream& is);
FwitArray read_fwit(const std::string& path);

}  // namespace fwionet
