#include "spigan/image_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spigan {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return is;
}

// Reads one whitespace-delimited token, skipping `#` comments.
std::string next_token(std::istream& is) {
    std::string tok;
    while (is) {
        int c = is.get();
        if (c == '#') {
            while (is && is.get() != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        if (c == EOF) break;
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw std::runtime_error("truncated netpbm header");
    return tok;
}

struct PnmHeader {
    std::string magic;
    std::size_t width, height, maxval;
};

PnmHeader read_header(std::istream& is, const std::string& expected_magic) {
    PnmHeader h;
    h.magic = next_token(is);
    if (h.magic != expected_magic) {
        throw std::runtime_error("expected " + expected_magic + " file, got " + h.magic);
    }
    h.width = std::stoul(next_token(is));
    h.height = std::stoul(next_token(is));
    h.maxval = std::stoul(next_token(is));
    return h;
}

unsigned char quantize8(double v01) {
    const double q = std::lround(std::clamp(v01, 0.0, 1.0) * 255.0);
    return static_cast<unsigned char>(q);
}

} // namespace

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw std::invalid_argument("write_ppm needs a [3,H,W] tensor, got " + shape_str(image.shape()));
    }
    const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
    auto os = open_out(path);
    os << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(3 * w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                row[3 * c + ch] = quantize8((image.data()[ch * hw + r * w + c] + 1.0) * 0.5);
            }
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

Tensor read_ppm(const std::string& path) {
    auto is = open_in(path);
    const PnmHeader h = read_header(is, "P6");
    if (h.maxval != 255) throw std::runtime_error("read_ppm expects maxval 255");
    Tensor image({3, h.height, h.width});
    const std::size_t hw = h.height * h.width;
    std::vector<unsigned char> row(3 * h.width);
    for (std::size_t r = 0; r < h.height; ++r) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw std::runtime_error("truncated ppm payload in " + path);
        for (std::size_t c = 0; c < h.width; ++c) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                image.data()[ch * hw + r * h.width + c] = row[3 * c + ch] / 255.0 * 2.0 - 1.0;
            }
        }
    }
    return image;
}

void write_pgm8(const std::string& path, const LabelMap& labels) {
    if (labels.shape.size() != 2) {
        throw std::invalid_argument("write_pgm8 needs an [H,W] label map");
    }
    const std::size_t h = labels.shape[0], w = labels.shape[1];
    auto os = open_out(path);
    os << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::int32_t v = labels.v[r * w + c];
            if (v < 0 || v > 255) throw std::invalid_argument("label out of 8-bit range");
            row[c] = static_cast<unsigned char>(v);
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

LabelMap read_pgm8(const std::string& path) {
    auto is = open_in(path);
    const PnmHeader h = read_header(is, "P5");
    if (h.maxval != 255) throw std::runtime_error("read_pgm8 expects maxval 255");
    LabelMap labels({h.height, h.width});
    std::vector<unsigned char> row(h.width);
    for (std::size_t r = 0; r < h.height; ++r) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw std::runtime_error("truncated pgm payload in " + path);
        for (std::size_t c = 0; c < h.width; ++c) labels.v[r * h.width + c] = row[c];
    }
    return labels;
}

void write_pgm16(const std::string& path, const Tensor& depth) {
    if (depth.rank() != 3 || depth.dim(0) != 1) {
        throw std::invalid_argument("write_pgm16 needs a [1,H,W] tensor");
    }
    const std::size_t h = depth.dim(1), w = depth.dim(2);
    auto os = open_out(path);
    os << "P5\n" << w << " " << h << "\n65535\n";
    std::vector<unsigned char> row(2 * w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double v = std::clamp(depth.data()[r * w + c], 0.0, 1.0);
            const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
            row[2 * c] = static_cast<unsigned char>(q >> 8); // netpbm is big-endian
            row[2 * c + 1] = static_cast<unsigned char>(q & 0xff);
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

Tensor read_pgm16(const std::string& path) {
    auto is = open_in(path);
    const PnmHeader h = read_header(is, "P5");
    if (h.maxval != 65535) throw std::runtime_error("read_pgm16 expects maxval 65535");
    Tensor depth({1, h.height, h.width});
    std::vector<unsigned char> row(2 * h.width);
    for (std::size_t r = 0; r < h.height; ++r) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw std::runtime_error("truncated pgm payload in " + path);
        for (std::size_t c = 0; c < h.width; ++c) {
            const std::uint16_t q =
                static_cast<std::uint16_t>((row[2 * c] << 8) | row[2 * c + 1]);
            depth.data()[r * h.width + c] = q / 65535.0;
        }
    }
    return depth;
}

} // namespace spigan
