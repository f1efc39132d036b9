#include "rival/image.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstring>
#include <string>

#include "rival/errors.hpp"
#include "rival/fsutil.hpp"

namespace rival {

namespace {

struct MemReader {
    const unsigned char* data;
    std::size_t size;
    std::size_t pos;
};

void mem_read(png_structp png, png_bytep out, png_size_t count) {
    MemReader* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + count > r->size)
        png_error(png, "unexpected end of PNG stream");
    std::memcpy(out, r->data + r->pos, count);
    r->pos += count;
}

void mem_write(png_structp png, png_bytep data, png_size_t count) {
    std::string* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), count);
}

void mem_flush(png_structp) {}

}  // namespace

Raster load_png(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 8 ||
        png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8))
        throw FormatError(path.string() + ": not a PNG file");

    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("libpng: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("libpng: allocation failure");
    }

    MemReader reader{reinterpret_cast<const unsigned char*>(bytes.data()),
                     bytes.size(), 0};
    Raster image;
    std::vector<png_bytep> rows;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path.string() + ": corrupt or truncated PNG");
    }

    png_set_read_fn(png, &reader, mem_read);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth != 8 || color != PNG_COLOR_TYPE_RGB) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path.string() +
                          ": unsupported PNG (need 8-bit RGB, got depth " +
                          std::to_string(depth) + " color type " +
                          std::to_string(color) + ")");
    }

    image = Raster(static_cast<int>(w), static_cast<int>(h));
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = image.pixels.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void save_png(const std::filesystem::path& path, const Raster& image) {
    if (image.width <= 0 || image.height <= 0)
        throw InvalidInputError("save_png: empty image");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    if (!png) throw FormatError("libpng: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("libpng: allocation failure");
    }

    std::string encoded;
    std::vector<png_bytep> rows(image.height);
    for (int y = 0; y < image.height; ++y)
        rows[y] = const_cast<png_bytep>(image.pixels.data() +
                                        static_cast<std::size_t>(y) *
                                            image.width * 3);

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError(path.string() + ": PNG encode failed");
    }

    png_set_write_fn(png, &encoded, mem_write, mem_flush);
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);

    write_file_atomic(path, encoded);
}

LatentTensor encode_latent(const Raster& image) {
    if (image.pixel_count() == 0)
        throw InvalidInputError("encode_latent: empty image");
    LatentTensor x(3, image.height, image.width);
    const std::size_t hw = image.pixel_count();
    for (std::size_t p = 0; p < hw; ++p)
        for (int c = 0; c < 3; ++c)
            x.data[static_cast<std::size_t>(c) * hw + p] =
                2.0 * image.pixels[p * 3 + c] / 255.0 - 1.0;
    return x;
}

Raster decode_latent(const LatentTensor& x) {
    if (x.channels != 3)
        throw ConfigError("decode_latent: identity codec needs 3 channels, got " +
                          std::to_string(x.channels));
    Raster image(x.width, x.height);
    const std::size_t hw = x.spatial_size();
    for (std::size_t p = 0; p < hw; ++p) {
        for (int c = 0; c < 3; ++c) {
            double v = x.data[static_cast<std::size_t>(c) * hw + p];
            v = std::min(1.0, std::max(-1.0, v));
            long byte = std::lround((v + 1.0) * 0.5 * 255.0);
            image.pixels[p * 3 + c] = static_cast<std::uint8_t>(
                std::min<long>(255, std::max<long>(0, byte)));
        }
    }
    return image;
}

}  // namespace rival
