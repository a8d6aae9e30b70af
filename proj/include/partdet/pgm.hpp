#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "partdet/image.hpp"

namespace partdet {

namespace detail {

// Advances past whitespace and '#' comments (comment runs to end of line).
inline void pgm_skip_separators(const std::string& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        unsigned char ch = static_cast<unsigned char>(bytes[pos]);
        if (std::isspace(ch)) {
            ++pos;
        } else if (ch == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
}

inline long pgm_read_int(const std::string& bytes, std::size_t& pos, const char* what) {
    pgm_skip_separators(bytes, pos);
    if (pos >= bytes.size()) throw FormatError(std::string("pgm: truncated header, missing ") + what);
    bool neg = false;
    if (bytes[pos] == '-') {
        neg = true;
        ++pos;
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
        throw FormatError(std::string("pgm: expected integer for ") + what);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
        v = v * 10 + (bytes[pos] - '0');
        if (v > 1000000000L) throw FormatError(std::string("pgm: absurd value for ") + what);
        ++pos;
    }
    return neg ? -v : v;
}

}  // namespace detail

// Decodes a binary (P5) or ASCII (P2) PGM, 8-bit depth. A maxval below 255
// rescales samples to the [0, 255] range.
inline GrayImage read_pgm(const std::string& bytes) {
    if (bytes.size() < 2) throw FormatError("pgm: too short for a magic number");
    if (bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
        throw FormatError("pgm: unsupported format, expected magic P5 or P2, got '" + bytes.substr(0, 2) + "'");
    }
    bool binary = bytes[1] == '5';
    std::size_t pos = 2;
    long w = detail::pgm_read_int(bytes, pos, "width");
    long h = detail::pgm_read_int(bytes, pos, "height");
    long maxval = detail::pgm_read_int(bytes, pos, "maxval");
    if (w < 1 || h < 1) throw FormatError("pgm: non-positive dimensions");
    if (static_cast<long long>(w) * h > 100000000LL) throw FormatError("pgm: image too large");
    if (maxval > 255) throw FormatError("pgm: unsupported depth, maxval > 255");
    if (maxval < 1) throw FormatError("pgm: invalid maxval");

    GrayImage img(static_cast<int>(h), static_cast<int>(w));
    std::size_t count = img.data.size();
    double scale = 255.0 / static_cast<double>(maxval);

    if (binary) {
        // exactly one whitespace byte separates the header from the payload
        if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
            throw FormatError("pgm: missing separator before raster");
        ++pos;
        if (bytes.size() - pos < count) throw FormatError("pgm: truncated raster payload");
        for (std::size_t i = 0; i < count; ++i) {
            unsigned char raw = static_cast<unsigned char>(bytes[pos + i]);
            if (raw > maxval) throw FormatError("pgm: sample exceeds maxval");
            img.data[i] = static_cast<float>(raw * scale);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            long v;
            try {
                v = detail::pgm_read_int(bytes, pos, "sample");
            } catch (const FormatError&) {
                throw FormatError("pgm: truncated or malformed ASCII raster");
            }
            if (v < 0 || v > maxval) throw FormatError("pgm: sample out of range");
            img.data[i] = static_cast<float>(v * scale);
        }
    }
    return img;
}

// Canonical P5 writer: "P5\n<w> <h>\n255\n" + raw samples, values rounded
// to nearest and clamped to [0, 255].
inline std::string write_pgm_p5(const GrayImage& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.data.size());
    for (float v : img.data) {
        long q = std::lround(static_cast<double>(v));
        if (q < 0) q = 0;
        if (q > 255) q = 255;
        out.push_back(static_cast<char>(static_cast<unsigned char>(q)));
    }
    return out;
}

// Canonical P2 writer: one image row per text line.
inline std::string write_pgm_p2(const GrayImage& img) {
    std::string out = "P2\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            long q = std::lround(static_cast<double>(img.at(r, c)));
            if (q < 0) q = 0;
            if (q > 255) q = 255;
            if (c) out.push_back(' ');
            out += std::to_string(q);
        }
        out.push_back('\n');
    }
    return out;
}

inline GrayImage read_pgm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return read_pgm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(std::string(e.what()) + " [" + path + "]");
    }
}

inline void write_pgm_file(const std::string& path, const GrayImage& img, bool binary = true) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open file for writing: " + path);
    std::string bytes = binary ? write_pgm_p5(img) : write_pgm_p2(img);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path);
}

}  // namespace partdet
