#include "irff/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

IRFF_BEGIN_NAMESPACE

namespace {

bool is_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[2] = {};
    in.read(magic, 2);
    return in && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '2');
}

// Skips whitespace and '#' comments between header tokens.
std::size_t pgm_token(std::istream& in, const std::filesystem::path& path) {
    while (true) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    std::size_t v = 0;
    if (!(in >> v)) throw IoError("malformed PGM header in " + path.string());
    return v;
}

Image read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    const bool binary = magic == "P5";
    Image img;
    img.channels = 1;
    img.width = pgm_token(in, path);
    img.height = pgm_token(in, path);
    const auto maxval = pgm_token(in, path);
    if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 255) {
        throw IoError("unsupported PGM geometry or depth in " + path.string());
    }
    img.pixels.resize(img.width * img.height);
    if (binary) {
        in.get();
        in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
        if (!in) throw IoError("truncated PGM data in " + path.string());
    } else {
        for (auto& p : img.pixels) {
            std::size_t v = 0;
            if (!(in >> v) || v > maxval) throw IoError("bad PGM sample in " + path.string());
            p = static_cast<std::uint8_t>(v);
        }
    }
    if (maxval != 255) {
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(std::lround(p * 255.0 / maxval));
    }
    return img;
}

Image gray_to_rgb(const Image& g) {
    Image out{3, g.height, g.width, std::vector<std::uint8_t>(g.pixels.size() * 3)};
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
        out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = g.pixels[i];
    }
    return out;
}

}  // namespace

Image read_image(const std::filesystem::path& path, std::size_t channels) {
    if (channels != 1 && channels != 3) throw ConfigError("read_image: channels must be 1 or 3");
    if (!std::filesystem::exists(path)) throw IoError("no such image: " + path.string());
    if (is_pgm(path)) {
        auto g = read_pgm(path);
        return channels == 1 ? g : gray_to_rgb(g);
    }

    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
        throw IoError("cannot decode " + path.string() + ": " + png.message);
    }
    png.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image img;
    img.channels = channels;
    img.height = png.height;
    img.width = png.width;
    img.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw IoError("cannot decode " + path.string() + ": " + msg);
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) throw ConfigError("write_png: channels must be 1 or 3");
    if (image.pixels.size() != image.channels * image.height * image.width) {
        throw ShapeError("write_png: pixel buffer does not match geometry");
    }
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, image.pixels.data(), 0, nullptr)) {
        throw IoError("cannot write " + path.string() + ": " + png.message);
    }
}

Tensor image_to_tensor(const Image& image) {
    const auto c = image.channels, h = image.height, w = image.width;
    std::vector<real> data(c * h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t k = 0; k < c; ++k) {
                data[(k * h + y) * w + x] = static_cast<real>(image.pixels[(y * w + x) * c + k] / 255.0);
            }
        }
    }
    return Tensor::from({c, h, w}, std::move(data));
}

Image tensor_to_image(const Tensor& x) {
    if (x.rank() != 3 || (x.dim(0) != 1 && x.dim(0) != 3)) {
        throw ShapeError("tensor_to_image expects [1|3, H, W], got " + shape_str(x.shape()));
    }
    Image img{x.dim(0), x.dim(1), x.dim(2), {}};
    const auto c = img.channels, h = img.height, w = img.width;
    img.pixels.resize(c * h * w);
    const auto d = x.data();
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t px = 0; px < w; ++px) {
                const double v = std::clamp(static_cast<double>(d[(k * h + y) * w + px]), 0.0, 1.0);
                img.pixels[(y * w + px) * c + k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return img;
}

IRFF_END_NAMESPACE
