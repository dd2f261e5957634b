#include "pathbench/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace pathbench {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& p, const std::string& what) {
    throw std::runtime_error(p.string() + ": " + what);
}

} // namespace

RGBImage read_png(const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) fail(path, "not found");

    std::uint8_t sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8))
        fail(path, "corrupt header: not a PNG");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "libpng init failed");
    }
    RGBImage img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "corrupt PNG data");
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    // normalize every color type to 8-bit RGB
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    img.width = int(png_get_image_width(png, info));
    img.height = int(png_get_image_height(png, info));
    if (img.width < 1 || img.height < 1) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "corrupt header: empty image");
    }
    img.pixels.resize(std::size_t(3) * img.width * img.height);
    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.pixels.data() + std::size_t(3) * img.width * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const RGBImage& img, const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(path, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "PNG write failed");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.pixels.data() + std::size_t(3) * img.width * y);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

RGBImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "not found");
    std::string magic;
    in >> magic;
    if (magic != "P6") fail(path, "corrupt header: not a P6 PPM");

    auto next_int = [&](const char* what) {
        // skip whitespace and '#' comments between header fields
        int c;
        while ((c = in.peek()) != EOF) {
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        long v = -1;
        in >> v;
        if (!in || v < 0) fail(path, std::string("corrupt header: bad ") + what);
        return v;
    };
    long w = next_int("width");
    long h = next_int("height");
    long maxval = next_int("maxval");
    if (w < 1 || h < 1) fail(path, "corrupt header: empty image");
    if (maxval != 255) fail(path, "unsupported format: PPM maxval must be 255");
    in.get(); // single whitespace after maxval

    RGBImage img;
    img.width = int(w);
    img.height = int(h);
    img.pixels.resize(std::size_t(3) * w * h);
    in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
    if (std::size_t(in.gcount()) != img.pixels.size()) fail(path, "truncated pixel data");
    return img;
}

void write_ppm(const RGBImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
    if (!out) fail(path, "write failed");
}

RGBImage load_image(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) fail(path, "not found");
    unsigned char head[8] = {0};
    probe.read(reinterpret_cast<char*>(head), 8);
    probe.close();
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (std::memcmp(head, png_sig, 8) == 0) return read_png(path);
    if (head[0] == 'P' && head[1] == '6') return read_ppm(path);
    fail(path, "unsupported format (expected PNG or P6 PPM)");
}

void save_image(const RGBImage& img, const std::filesystem::path& path) {
    auto ext = path.extension().string();
    if (ext == ".png") return write_png(img, path);
    if (ext == ".ppm") return write_ppm(img, path);
    fail(path, "unsupported output format (expected .png or .ppm)");
}

} // namespace pathbench
