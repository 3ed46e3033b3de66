#include "patchblock/image.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>

#include "patchblock/errors.hpp"

namespace patchblock {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void require_valid(const ImageTensor& image) {
    if (!image.valid()) throw DimensionError("invalid image tensor");
}

// ---- PNG ----

ImageTensor load_png(std::FILE* fp, const std::string& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed");
    }
    std::vector<png_bytep> rows;
    ImageTensor out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth != 8 || (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("unsupported PNG (only 8-bit gray/RGB): " + path);
    }
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.channels = color_type == PNG_COLOR_TYPE_GRAY ? 1 : 3;
    out.data.resize(static_cast<std::size_t>(out.height) * out.width * out.channels);

    std::vector<std::uint8_t> interleaved(static_cast<std::size_t>(out.height) * out.width *
                                          out.channels);
    rows.resize(out.height);
    for (int y = 0; y < out.height; ++y)
        rows[y] = interleaved.data() + static_cast<std::size_t>(y) * out.width * out.channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t plane = static_cast<std::size_t>(out.height) * out.width;
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < out.channels; ++c)
            out.data[static_cast<std::size_t>(c) * plane + p] = interleaved[p * out.channels + c];
    return out;
}

void save_png(const ImageTensor& image, std::FILE* fp, const std::string& path) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, image.width, image.height, 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c)
                row[static_cast<std::size_t>(x) * image.channels + c] =
                    image.data[static_cast<std::size_t>(c) * plane +
                               static_cast<std::size_t>(y) * image.width + x];
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---- PPM / PGM (binary, maxval 255) ----

int pnm_token(std::FILE* fp, const std::string& path) {
    // Skips whitespace and '#' comments, then reads one decimal token.
    int ch = std::fgetc(fp);
    for (;;) {
        while (ch != EOF && std::isspace(ch)) ch = std::fgetc(fp);
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = std::fgetc(fp);
            continue;
        }
        break;
    }
    if (ch == EOF || !std::isdigit(ch)) throw FormatError("malformed PNM header: " + path);
    long value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        if (value > 1 << 30) throw FormatError("malformed PNM header: " + path);
        ch = std::fgetc(fp);
    }
    if (ch == EOF) throw FormatError("truncated PNM header: " + path);
    return static_cast<int>(value);
}

ImageTensor load_pnm(std::FILE* fp, int channels, const std::string& path) {
    ImageTensor out;
    out.channels = channels;
    out.width = pnm_token(fp, path);
    out.height = pnm_token(fp, path);
    const int maxval = pnm_token(fp, path);
    if (maxval != 255) throw FormatError("only maxval 255 PNM supported: " + path);
    if (out.width <= 0 || out.height <= 0) throw FormatError("bad PNM dimensions: " + path);

    const std::size_t plane = static_cast<std::size_t>(out.height) * out.width;
    std::vector<std::uint8_t> interleaved(plane * channels);
    if (std::fread(interleaved.data(), 1, interleaved.size(), fp) != interleaved.size())
        throw FormatError("truncated PNM data: " + path);
    out.data.resize(plane * channels);
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < channels; ++c)
            out.data[static_cast<std::size_t>(c) * plane + p] = interleaved[p * channels + c];
    return out;
}

void save_pnm(const ImageTensor& image, std::FILE* fp) {
    std::fprintf(fp, "P%c\n%d %d\n255\n", image.channels == 3 ? '6' : '5', image.width,
                 image.height);
    const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
    std::vector<std::uint8_t> interleaved(plane * image.channels);
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < image.channels; ++c)
            interleaved[p * image.channels + c] = image.data[static_cast<std::size_t>(c) * plane + p];
    if (std::fwrite(interleaved.data(), 1, interleaved.size(), fp) != interleaved.size())
        throw IoError("short write on PNM output");
}

std::string lower_extension(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext;
}

}  // namespace

ImageTensor make_image(int height, int width, int channels, std::uint8_t fill) {
    if (height <= 0 || width <= 0 || (channels != 1 && channels != 3))
        throw DimensionError("bad image dimensions");
    ImageTensor out;
    out.height = height;
    out.width = width;
    out.channels = channels;
    out.data.assign(static_cast<std::size_t>(height) * width * channels, fill);
    return out;
}

ImageTensor load_image(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open for reading: " + path);
    unsigned char magic[8] = {0};
    const std::size_t got = std::fread(magic, 1, sizeof magic, fp.get());
    if (std::fseek(fp.get(), 0, SEEK_SET) != 0) throw IoError("seek failed: " + path);

    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (got >= 8 && std::memcmp(magic, png_sig, 8) == 0) return load_png(fp.get(), path);
    if (got >= 2 && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) {
        std::fgetc(fp.get());
        std::fgetc(fp.get());
        return load_pnm(fp.get(), magic[1] == '6' ? 3 : 1, path);
    }
    throw FormatError("unrecognized image format: " + path);
}

void save_image(const ImageTensor& image, const std::string& path) {
    require_valid(image);
    const std::string ext = lower_extension(path);
    if (ext == ".ppm" && image.channels != 3)
        throw FormatError(".ppm requires a 3-channel image");
    if (ext == ".pgm" && image.channels != 1)
        throw FormatError(".pgm requires a 1-channel image");
    if (ext != ".png" && ext != ".ppm" && ext != ".pgm")
        throw FormatError("unsupported output extension (use .png/.ppm/.pgm): " + path);

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path);
    if (ext == ".png")
        save_png(image, fp.get(), path);
    else
        save_pnm(image, fp.get());
    if (std::fflush(fp.get()) != 0) throw IoError("flush failed: " + path);
}

}  // namespace patchblock
