#include "patchblock/chunking.hpp"

#include <cstddef>

#include "patchblock/errors.hpp"

namespace patchblock {

ChunkGrid chunk_image(const ImageTensor& image, int kernel, int stride) {
    if (!image.valid()) throw DimensionError("invalid image tensor");
    if (stride < 1) throw ParameterError("stride must be >= 1");
    if (kernel < 1 || kernel > image.height || kernel > image.width)
        throw DimensionError("kernel does not fit inside the image");

    ChunkGrid grid;
    grid.kernel = kernel;
    grid.stride = stride;
    grid.channels = image.channels;
    grid.rows = (image.height - kernel) / stride + 1;
    grid.cols = (image.width - kernel) / stride + 1;
    grid.chunks.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);

    const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
    const std::size_t block_plane = static_cast<std::size_t>(kernel) * kernel;
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            Chunk chunk;
            chunk.index = r * grid.cols + c;
            chunk.top = r * stride;
            chunk.left = c * stride;
            chunk.pixels.resize(block_plane * image.channels);
            for (int ch = 0; ch < image.channels; ++ch) {
                const std::uint8_t* src = image.data.data() + ch * plane;
                std::uint8_t* dst = chunk.pixels.data() + ch * block_plane;
                for (int y = 0; y < kernel; ++y) {
                    const std::uint8_t* row =
                        src + static_cast<std::size_t>(chunk.top + y) * image.width + chunk.left;
                    std::copy(row, row + kernel, dst + static_cast<std::size_t>(y) * kernel);
                }
            }
            grid.chunks.push_back(std::move(chunk));
        }
    }
    return grid;
}

std::vector<int> neighbors_of(const ChunkGrid& grid, int index) {
    if (index < 0 || index >= grid.count()) throw ParameterError("chunk index out of range");
    const int r = index / grid.cols;
    const int c = index % grid.cols;
    std::vector<int> out;
    out.reserve(8);
    for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int nr = r + dr;
            const int nc = c + dc;
            if (nr < 0 || nr >= grid.rows || nc < 0 || nc >= grid.cols) continue;
            out.push_back(nr * grid.cols + nc);
        }
    }
    return out;
}

ImageTensor superimpose(const ImageTensor& image, const std::vector<Replacement>& replacements,
                        int kernel) {
    if (!image.valid()) throw DimensionError("invalid image tensor");
    const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
    const std::size_t block_plane = static_cast<std::size_t>(kernel) * kernel;
    for (const auto& rep : replacements) {
        if (rep.block.size() != block_plane * image.channels)
            throw DimensionError("replacement block size does not match kernel");
        if (rep.top < 0 || rep.left < 0 || rep.top + kernel > image.height ||
            rep.left + kernel > image.width)
            throw DimensionError("replacement window outside the image");
    }

    ImageTensor out = image;
    if (replacements.empty()) return out;

    // Accumulate sums and coverage counts, then average once per pixel so the
    // result is independent of replacement order.
    std::vector<std::uint32_t> sum(plane * image.channels, 0);
    std::vector<std::uint16_t> count(plane, 0);
    for (const auto& rep : replacements) {
        for (int y = 0; y < kernel; ++y) {
            const std::size_t row = static_cast<std::size_t>(rep.top + y) * image.width + rep.left;
            for (int x = 0; x < kernel; ++x) ++count[row + x];
            for (int ch = 0; ch < image.channels; ++ch) {
                const std::uint8_t* src =
                    rep.block.data() + ch * block_plane + static_cast<std::size_t>(y) * kernel;
                std::uint32_t* dst = sum.data() + ch * plane + row;
                for (int x = 0; x < kernel; ++x) dst[x] += src[x];
            }
        }
    }
    for (std::size_t p = 0; p < plane; ++p) {
        if (count[p] == 0) continue;
        for (int ch = 0; ch < image.channels; ++ch) {
            const std::uint32_t s = sum[ch * plane + p];
            // mean rounded half-up
            out.data[ch * plane + p] =
                static_cast<std::uint8_t>((2u * s + count[p]) / (2u * count[p]));
        }
    }
    return out;
}

}  // namespace patchblock
