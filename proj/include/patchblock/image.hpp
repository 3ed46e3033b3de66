#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace patchblock {

/// 8-bit raster image stored planar: data[c*H*W + y*W + x].
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;  // 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> data;

    std::uint8_t at(int y, int x, int c) const {
        return data[static_cast<std::size_t>(c) * height * width +
                    static_cast<std::size_t>(y) * width + x];
    }
    std::uint8_t& at(int y, int x, int c) {
        return data[static_cast<std::size_t>(c) * height * width +
                    static_cast<std::size_t>(y) * width + x];
    }
    bool valid() const {
        return (channels == 1 || channels == 3) && height > 0 && width > 0 &&
               data.size() == static_cast<std::size_t>(height) * width * channels;
    }
};

ImageTensor make_image(int height, int width, int channels, std::uint8_t fill = 0);

/// Decodes PNG (8-bit gray/RGB) or binary PPM/PGM, sniffing the magic bytes.
/// Grayscale decodes to channels=1, color to channels=3.
ImageTensor load_image(const std::string& path);

/// Encodes by extension: .png, .ppm (P6, RGB only), .pgm (P5, gray only).
/// Output is lossless; a saved file loads back bit-identical.
void save_image(const ImageTensor& image, const std::string& path);

}  // namespace patchblock
