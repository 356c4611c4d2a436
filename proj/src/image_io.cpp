#include "warp4d/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace warp4d {

namespace {

uint8_t to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

void write_png_impl(const std::string& path, const std::vector<uint8_t>& bytes, int h, int w,
                    int channels) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IoError("write_png: " + path + ": " + msg);
    }
}

std::vector<uint8_t> read_png_impl(const std::string& path, int channels, int& h, int& w) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IoError("read_png: " + path + ": " + msg);
    }
    img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    h = static_cast<int>(img.height);
    w = static_cast<int>(img.width);
    std::vector<uint8_t> bytes(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IoError("read_png: " + path + ": " + msg);
    }
    return bytes;
}

void put_u32_le(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xFF));
}

uint32_t get_u32_le(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void write_png(const std::string& path, const Tensor& img) {
    if (img.ndim() == 3 && img.dim(2) == 3) {
        const int h = img.dim(0), w = img.dim(1);
        std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * 3);
        for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img[i]);
        write_png_impl(path, bytes, h, w, 3);
        return;
    }
    if (img.ndim() == 2) {
        const int h = img.dim(0), w = img.dim(1);
        std::vector<uint8_t> bytes(static_cast<size_t>(h) * w);
        for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img[i]);
        write_png_impl(path, bytes, h, w, 1);
        return;
    }
    throw DimensionError("write_png: expected (H,W,3) or (H,W) tensor");
}

Tensor read_png_rgb(const std::string& path) {
    int h = 0, w = 0;
    const std::vector<uint8_t> bytes = read_png_impl(path, 3, h, w);
    Tensor out({h, w, 3});
    for (size_t i = 0; i < bytes.size(); ++i) out[i] = bytes[i] / 255.0;
    return out;
}

Tensor read_png_gray(const std::string& path) {
    int h = 0, w = 0;
    const std::vector<uint8_t> bytes = read_png_impl(path, 1, h, w);
    Tensor out({h, w});
    for (size_t i = 0; i < bytes.size(); ++i) out[i] = bytes[i] / 255.0;
    return out;
}

void write_zbuf(const std::string& path, const Tensor& map) {
    if (map.ndim() != 2) throw DimensionError("write_zbuf: expected (H,W) tensor");
    static_assert(std::endian::native == std::endian::little,
                  "float serialization assumes a little-endian host");
    const int h = map.dim(0), w = map.dim(1);
    std::vector<uint8_t> out;
    out.reserve(12 + map.size() * 4);
    out.insert(out.end(), {'Z', 'B', 'U', 'F'});
    put_u32_le(out, static_cast<uint32_t>(h));
    put_u32_le(out, static_cast<uint32_t>(w));
    for (size_t i = 0; i < map.size(); ++i) {
        const float f = static_cast<float>(map[i]);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32_le(out, bits);
    }
    std::ofstream fs(path, std::ios::binary | std::ios::trunc);
    if (!fs) throw IoError("write_zbuf: cannot open " + path);
    fs.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!fs) throw IoError("write_zbuf: short write to " + path);
}

Tensor read_zbuf(const std::string& path) {
    std::ifstream fs(path, std::ios::binary);
    if (!fs) throw IoError("read_zbuf: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(fs)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "ZBUF", 4) != 0)
        throw IoError("read_zbuf: " + path + " lacks the ZBUF header");
    const uint32_t h = get_u32_le(bytes.data() + 4);
    const uint32_t w = get_u32_le(bytes.data() + 8);
    const size_t n = static_cast<size_t>(h) * w;
    if (bytes.size() != 12 + n * 4)
        throw IoError("read_zbuf: " + path + " has a truncated payload");
    Tensor out({static_cast<int>(h), static_cast<int>(w)});
    for (size_t i = 0; i < n; ++i) {
        const uint32_t bits = get_u32_le(bytes.data() + 12 + i * 4);
        float f;
        std::memcpy(&f, &bits, 4);
        out[i] = static_cast<double>(f);
    }
    return out;
}

}  // namespace warp4d
