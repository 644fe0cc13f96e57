#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

namespace dehaze {

// Row-major, channel-interleaved raster. Samples are nominally in [0,1];
// operations that promise clamping say so.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {
        if (w <= 0 || h <= 0 || (c != 1 && c != 3))
            throw std::invalid_argument("Image: bad dimensions");
    }

    size_t size() const { return data.size(); }

    double& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    Image& clamp01() {
        for (double& v : data) v = std::min(1.0, std::max(0.0, v));
        return *this;
    }
};

inline void require_same_shape(const Image& a, const Image& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": dimension mismatch");
}

// Rec. 601 luminance; identity on single-channel input.
inline Image to_luminance(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(x, y, 0) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                              0.114 * img.at(x, y, 2);
    return out;
}

// 8-bit quantization, round-half-up.
inline uint8_t quantize8(double v) {
    double q = std::floor(v * 255.0 + 0.5);
    return static_cast<uint8_t>(std::min(255.0, std::max(0.0, q)));
}

namespace detail {

inline std::string lower_ext(const std::string& path) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

// Netpbm binary: P6 (RGB) / P5 (gray), maxval 255.
inline Image load_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open file: " + path);

    auto next_token = [&f, &path]() -> std::string {
        std::string tok;
        int c;
        while ((c = f.get()) != EOF) {
            if (c == '#') {
                while ((c = f.get()) != EOF && c != '\n') {}
            } else if (!std::isspace(c)) {
                tok.push_back(static_cast<char>(c));
                while ((c = f.peek()) != EOF && !std::isspace(c) && c != '#')
                    tok.push_back(static_cast<char>(f.get()));
                return tok;
            }
        }
        throw std::runtime_error("corrupt PNM header: " + path);
    };

    std::string magic = next_token();
    int channels;
    if (magic == "P6") channels = 3;
    else if (magic == "P5") channels = 1;
    else throw std::runtime_error("unsupported PNM magic '" + magic + "': " + path);

    int w, h, maxval;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::logic_error&) {
        throw std::runtime_error("corrupt PNM header: " + path);
    }
    if (w <= 0 || h <= 0) throw std::runtime_error("corrupt PNM header: " + path);
    if (maxval != 255)
        throw std::runtime_error("unsupported PNM maxval (want 255): " + path);
    f.get();  // single whitespace after maxval

    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(f.gcount()) != raw.size())
        throw std::runtime_error("truncated PNM data: " + path);

    Image img(w, h, channels);
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

inline void save_pnm(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    f << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> raw(img.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = quantize8(img.data[i]);
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw std::runtime_error("cannot write file: " + path);
}

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

inline Image load_png(const std::string& path) {
    PngReadCloser s;
    s.fp = std::fopen(path.c_str(), "rb");
    if (!s.fp) throw std::runtime_error("cannot open file: " + path);

    uint8_t sig[8];
    if (std::fread(sig, 1, 8, s.fp) != 8 || png_sig_cmp(sig, 0, 8))
        throw std::runtime_error("not a PNG file: " + path);

    s.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!s.png) throw std::runtime_error("libpng init failed");
    s.info = png_create_info_struct(s.png);
    if (!s.info) throw std::runtime_error("libpng init failed");
    if (setjmp(png_jmpbuf(s.png)))
        throw std::runtime_error("corrupt PNG data: " + path);

    png_init_io(s.png, s.fp);
    png_set_sig_bytes(s.png, 8);
    png_read_info(s.png, s.info);

    png_set_strip_16(s.png);
    png_set_palette_to_rgb(s.png);
    png_set_expand_gray_1_2_4_to_8(s.png);
    png_set_strip_alpha(s.png);
    png_read_update_info(s.png, s.info);

    const int w = static_cast<int>(png_get_image_width(s.png, s.info));
    const int h = static_cast<int>(png_get_image_height(s.png, s.info));
    const int ch = static_cast<int>(png_get_channels(s.png, s.info));
    if (ch != 1 && ch != 3)
        throw std::runtime_error("unsupported PNG channel count: " + path);

    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * ch);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y)
        rows[y] = raw.data() + static_cast<size_t>(y) * w * ch;
    png_read_image(s.png, rows.data());
    png_read_end(s.png, nullptr);

    Image img(w, h, ch);
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

inline void save_png(const Image& img, const std::string& path) {
    PngWriteCloser s;
    s.fp = std::fopen(path.c_str(), "wb");
    if (!s.fp) throw std::runtime_error("cannot write file: " + path);

    s.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!s.png) throw std::runtime_error("libpng init failed");
    s.info = png_create_info_struct(s.png);
    if (!s.info) throw std::runtime_error("libpng init failed");
    if (setjmp(png_jmpbuf(s.png)))
        throw std::runtime_error("PNG write failed: " + path);

    png_init_io(s.png, s.fp);
    png_set_IHDR(s.png, s.info, img.width, img.height, 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(s.png, s.info);

    std::vector<uint8_t> raw(img.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = quantize8(img.data[i]);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = raw.data() + static_cast<size_t>(y) * img.width * img.channels;
    png_write_image(s.png, rows.data());
    png_write_end(s.png, nullptr);
}

}  // namespace detail

// Format chosen by extension: .png, .ppm (P6), .pgm (P5).
inline Image load_image(const std::string& path) {
    std::string ext = detail::lower_ext(path);
    if (ext == "png") return detail::load_png(path);
    if (ext == "ppm" || ext == "pgm" || ext == "pnm") return detail::load_pnm(path);
    throw std::runtime_error("unsupported image format: " + path);
}

inline void save_image(const Image& img, const std::string& path) {
    if (img.width <= 0 || img.height <= 0 || img.data.empty())
        throw std::invalid_argument("save_image: empty image");
    std::string ext = detail::lower_ext(path);
    if (ext == "png") detail::save_png(img, path);
    else if (ext == "ppm" || ext == "pgm" || ext == "pnm") detail::save_pnm(img, path);
    else throw std::runtime_error("unsupported image format: " + path);
}

}  // namespace dehaze
