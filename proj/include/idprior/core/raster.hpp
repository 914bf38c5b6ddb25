#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace idprior {

// Height x width x channel image, channel-interleaved, values in [0, 1].
struct Raster {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> pixels;

    Raster() = default;
    Raster(int h, int w, int c) : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h * w * c), 0.0f) {}

    float& at(int y, int x, int c) { return pixels[static_cast<std::size_t>((y * width + x) * channels + c)]; }
    float at(int y, int x, int c) const { return pixels[static_cast<std::size_t>((y * width + x) * channels + c)]; }

    bool operator==(const Raster&) const = default;
};

// Raw raster file: 16-byte little-endian header
//   u32 magic "IDRS" | u16 height | u16 width | u16 channels | u16 dtype | u32 reserved
// followed by height*width*channels samples. dtype 1 = float32, 2 = uint8.
enum class RasterDtype : std::uint16_t { float32 = 1, uint8 = 2 };

inline constexpr std::uint32_t kRasterMagic = 0x53524449u;  // "IDRS"

void write_raster(const std::filesystem::path& path, const Raster& raster);
Raster read_raster(const std::filesystem::path& path);

}  // namespace idprior
