#pragma once

#include <cstdint>
#include <vector>

#include "patchblock/image.hpp"

namespace patchblock {

/// One moving-window position. Pixels are a planar k*k*C copy of the image
/// sub-window (block[c*k*k + y*k + x]).
struct Chunk {
    int index = 0;  // row-major ordinal in the grid
    int top = 0;
    int left = 0;
    std::vector<std::uint8_t> pixels;
};

/// Valid-position window grid: rows = floor((H-k)/stride)+1, same for cols.
struct ChunkGrid {
    int kernel = 0;
    int stride = 0;
    int rows = 0;
    int cols = 0;
    int channels = 0;
    std::vector<Chunk> chunks;

    int count() const { return static_cast<int>(chunks.size()); }
};

ChunkGrid chunk_image(const ImageTensor& image, int kernel, int stride);

/// 8-connected grid neighbors of a chunk, in row-major order.
std::vector<int> neighbors_of(const ChunkGrid& grid, int index);

struct Replacement {
    int top = 0;
    int left = 0;
    std::vector<std::uint8_t> block;  // planar k*k*C
};

/// Writes blocks back into a copy of the image. Pixels covered by several
/// replacements get the arithmetic mean of the contributing blocks, rounded
/// half-up; pixels outside all replacement windows are untouched.
ImageTensor superimpose(const ImageTensor& image, const std::vector<Replacement>& replacements,
                        int kernel);

}  // namespace patchblock
