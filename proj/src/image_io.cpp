#include "micc/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "micc/errors.hpp"

namespace micc {

namespace {
int read_token(std::istream& in) {
    // PPM headers allow '#' comments between tokens.
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    in >> value;
    return value;
}
}  // namespace

ImageU8 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("ppm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw DataError("ppm: " + path + " is not binary P6");
    ImageU8 img;
    int w = read_token(in), h = read_token(in), maxval = read_token(in);
    if (w <= 0 || h <= 0 || maxval != 255) throw DataError("ppm: unsupported header in " + path);
    in.get();  // single whitespace after maxval
    img.width = static_cast<size_t>(w);
    img.height = static_cast<size_t>(h);
    img.rgb.resize(3 * img.width * img.height);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) throw DataError("ppm: truncated pixel data in " + path);
    return img;
}

void write_ppm(const std::string& path, const ImageU8& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("ppm: cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

ImageU8 read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw DataError("png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw DataError("png: failed to decode " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    ImageU8 img;
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DataError("png: expected RGB after expansion in " + path);
    }
    img.rgb.resize(3 * img.width * img.height);
    std::vector<png_bytep> rows(img.height);
    for (size_t y = 0; y < img.height; ++y) rows[y] = img.rgb.data() + 3 * y * img.width;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

ImageU8 read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("image: cannot open " + path);
    char sig[2] = {0, 0};
    in.read(sig, 2);
    in.close();
    if (sig[0] == 'P' && sig[1] == '6') return read_ppm(path);
    if (static_cast<unsigned char>(sig[0]) == 0x89 && sig[1] == 'P') return read_png(path);
    throw DataError("image: " + path + " is neither P6 PPM nor PNG");
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
}  // namespace

std::string base64_encode(const uint8_t* data, size_t n) {
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (size_t i = 0; i < n; i += 3) {
        uint32_t chunk = static_cast<uint32_t>(data[i]) << 16;
        if (i + 1 < n) chunk |= static_cast<uint32_t>(data[i + 1]) << 8;
        if (i + 2 < n) chunk |= static_cast<uint32_t>(data[i + 2]);
        out.push_back(kB64[(chunk >> 18) & 63]);
        out.push_back(kB64[(chunk >> 12) & 63]);
        out.push_back(i + 1 < n ? kB64[(chunk >> 6) & 63] : '=');
        out.push_back(i + 2 < n ? kB64[chunk & 63] : '=');
    }
    return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
    std::vector<uint8_t> out;
    uint32_t buf = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || std::isspace(static_cast<unsigned char>(c))) continue;
        int v = b64_value(c);
        if (v < 0) throw DataError("base64: invalid character");
        buf = (buf << 6) | static_cast<uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<uint8_t>((buf >> bits) & 0xFF));
        }
    }
    return out;
}

namespace {
constexpr const char* kPpmUriPrefix = "data:image/x-portable-pixmap;base64,";
}

std::string encode_ppm_data_uri(const ImageU8& img) {
    std::ostringstream ppm;
    ppm << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::string header = ppm.str();
    std::vector<uint8_t> bytes(header.begin(), header.end());
    bytes.insert(bytes.end(), img.rgb.begin(), img.rgb.end());
    return kPpmUriPrefix + base64_encode(bytes.data(), bytes.size());
}

bool is_data_uri(const std::string& s) { return s.rfind("data:", 0) == 0; }

ImageU8 decode_image_data_uri(const std::string& uri) {
    const size_t comma = uri.find(',');
    if (!is_data_uri(uri) || comma == std::string::npos || uri.find(";base64") == std::string::npos)
        throw DataError("data uri: expected data:<mime>;base64,<payload>");
    std::vector<uint8_t> bytes = base64_decode(uri.substr(comma + 1));
    // payload is a complete PPM stream
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw DataError("data uri: payload is not a P6 PPM");
    std::string tmp(bytes.begin(), bytes.end());
    std::istringstream in(tmp);
    std::string magic;
    in >> magic;
    int w = read_token(in), h = read_token(in), maxval = read_token(in);
    if (w <= 0 || h <= 0 || maxval != 255) throw DataError("data uri: unsupported PPM header");
    in.get();
    ImageU8 img;
    img.width = static_cast<size_t>(w);
    img.height = static_cast<size_t>(h);
    img.rgb.resize(3 * img.width * img.height);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) throw DataError("data uri: truncated pixels");
    return img;
}

ImageU8 resize_nearest(const ImageU8& img, size_t height, size_t width) {
    if (img.height == height && img.width == width) return img;
    ImageU8 out;
    out.height = height;
    out.width = width;
    out.rgb.resize(3 * height * width);
    for (size_t y = 0; y < height; ++y) {
        const size_t sy = y * img.height / height;
        for (size_t x = 0; x < width; ++x) {
            const size_t sx = x * img.width / width;
            const uint8_t* src = img.pixel(sy, sx);
            uint8_t* dst = out.pixel(y, x);
            dst[0] = src[0];
            dst[1] = src[1];
            dst[2] = src[2];
        }
    }
    return out;
}

Tensor to_float_image(const ImageU8& img) {
    Tensor t({3, img.height, img.width});
    for (size_t y = 0; y < img.height; ++y)
        for (size_t x = 0; x < img.width; ++x) {
            const uint8_t* px = img.pixel(y, x);
            for (size_t c = 0; c < 3; ++c) t[c * img.height * img.width + y * img.width + x] = px[c] / 255.0;
        }
    return t;
}

}  // namespace micc
