#include "idprior/core/raster.hpp"

#include "idprior/core/errors.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace idprior {

namespace {

template <typename T>
void put(std::array<unsigned char, 16>& buf, std::size_t at, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[at + i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}

template <typename T>
T get(const std::array<unsigned char, 16>& buf, std::size_t at) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf[at + i]) << (8 * i));
    return v;
}

}  // namespace

void write_raster(const std::filesystem::path& path, const Raster& raster) {
    if (raster.height <= 0 || raster.width <= 0 || raster.channels <= 0 || raster.height > 0xffff ||
        raster.width > 0xffff || raster.channels > 0xffff)
        throw ShapeError("raster dimensions out of range");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::array<unsigned char, 16> header{};
    put<std::uint32_t>(header, 0, kRasterMagic);
    put<std::uint16_t>(header, 4, static_cast<std::uint16_t>(raster.height));
    put<std::uint16_t>(header, 6, static_cast<std::uint16_t>(raster.width));
    put<std::uint16_t>(header, 8, static_cast<std::uint16_t>(raster.channels));
    put<std::uint16_t>(header, 10, static_cast<std::uint16_t>(RasterDtype::float32));
    put<std::uint32_t>(header, 12, 0u);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write raster '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(header.data()), header.size());
    static_assert(sizeof(float) == 4);
    for (float f : raster.pixels) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, &f, 4);
        std::array<unsigned char, 4> le{};
        for (int i = 0; i < 4; ++i) le[static_cast<std::size_t>(i)] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(le.data()), 4);
    }
    if (!out) throw IoError("short write on raster '" + path.string() + "'");
}

Raster read_raster(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read raster '" + path.string() + "'");
    std::array<unsigned char, 16> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    if (in.gcount() != 16 || get<std::uint32_t>(header, 0) != kRasterMagic)
        throw IoError("'" + path.string() + "' is not a raster file");
    Raster r(get<std::uint16_t>(header, 4), get<std::uint16_t>(header, 6), get<std::uint16_t>(header, 8));
    const auto dtype = static_cast<RasterDtype>(get<std::uint16_t>(header, 10));
    for (float& f : r.pixels) {
        if (dtype == RasterDtype::float32) {
            std::array<unsigned char, 4> le{};
            in.read(reinterpret_cast<char*>(le.data()), 4);
            std::uint32_t bits = 0;
            for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(le[static_cast<std::size_t>(i)]) << (8 * i);
            std::memcpy(&f, &bits, 4);
        } else if (dtype == RasterDtype::uint8) {
            const int c = in.get();
            f = static_cast<float>(c) / 255.0f;
        } else {
            throw IoError("unsupported raster dtype in '" + path.string() + "'");
        }
        if (!in) throw IoError("truncated raster '" + path.string() + "'");
    }
    return r;
}

}  // namespace idprior
