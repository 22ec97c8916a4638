#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "mgsms/core.hpp"

namespace mgsms {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

/// 8-bit RGB raster with (0,0) at the top-left corner, row-major.
struct PixelImage {
    int width = 0;
    int height = 0;
    std::vector<Rgb> pixels;

    PixelImage() = default;
    PixelImage(int w, int h, Rgb fill = {255, 255, 255})
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
        require(w >= 1 && h >= 1, "image: dimensions must be positive");
    }

    Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    /// Bounds-checked write; silently ignores off-canvas pixels so drawing
    /// primitives can clip naturally.
    void set(int x, int y, Rgb c) {
        if (inside(x, y)) at(x, y) = c;
    }
};

namespace png_detail {

inline void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

/// One chunk: length, 4-char type, payload, CRC over type+payload.
inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::uint8_t* data, std::size_t n) {
    append_be32(out, static_cast<std::uint32_t>(n));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data, data + n);
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), out.data() + crc_start, static_cast<uInt>(4 + n)));
    append_be32(out, crc);
}

}  // namespace png_detail

/// Encodes the image as an 8-bit truecolor PNG (filter 0 on every scanline,
/// one zlib stream, no ancillary chunks).
inline std::vector<std::uint8_t> encode_png(const PixelImage& img) {
    require(img.width >= 1 && img.height >= 1, "png: empty image");
    require(img.pixels.size() == static_cast<std::size_t>(img.width) * img.height,
            "png: pixel buffer does not match dimensions");

    // Raw scanlines, each prefixed with the filter byte 0 (= None).
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(img.height) * (1 + 3 * img.width));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        for (int x = 0; x < img.width; ++x) {
            const Rgb& p = img.at(x, y);
            raw.push_back(p.r);
            raw.push_back(p.g);
            raw.push_back(p.b);
        }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                  Z_DEFAULT_COMPRESSION) != Z_OK)
        fail("png: deflate failed");
    compressed.resize(bound);

    std::vector<std::uint8_t> out;
    static const std::uint8_t signature[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), signature, signature + 8);

    std::uint8_t ihdr[13];
    ihdr[0] = static_cast<std::uint8_t>(img.width >> 24);
    ihdr[1] = static_cast<std::uint8_t>(img.width >> 16);
    ihdr[2] = static_cast<std::uint8_t>(img.width >> 8);
    ihdr[3] = static_cast<std::uint8_t>(img.width);
    ihdr[4] = static_cast<std::uint8_t>(img.height >> 24);
    ihdr[5] = static_cast<std::uint8_t>(img.height >> 16);
    ihdr[6] = static_cast<std::uint8_t>(img.height >> 8);
    ihdr[7] = static_cast<std::uint8_t>(img.height);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type: truecolor
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter method
    ihdr[12] = 0;  // no interlace
    png_detail::append_chunk(out, "IHDR", ihdr, sizeof ihdr);
    png_detail::append_chunk(out, "IDAT", compressed.data(), compressed.size());
    png_detail::append_chunk(out, "IEND", nullptr, 0);
    return out;
}

inline void write_png(const std::string& path, const PixelImage& img) {
    std::vector<std::uint8_t> bytes = encode_png(img);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) fail("png: cannot open '%s' for writing", path.c_str());
    std::size_t wrote = std::fwrite(bytes.data(), 1, bytes.size(), f);
    if (std::fclose(f) != 0 || wrote != bytes.size()) fail("png: write failed on '%s'", path.c_str());
}

/// Decodes a PNG produced by encode_png (8-bit truecolor, filters None/Sub/Up
/// only). Supports exactly what the renderer emits plus the two cheap filters
/// so round-trip tests can exercise them.
inline PixelImage decode_png(const std::vector<std::uint8_t>& bytes) {
    static const std::uint8_t signature[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    require(bytes.size() > 8 && std::equal(signature, signature + 8, bytes.begin()),
            "png: bad signature");

    auto be32 = [&](std::size_t k) {
        return (static_cast<std::uint32_t>(bytes[k]) << 24) |
               (static_cast<std::uint32_t>(bytes[k + 1]) << 16) |
               (static_cast<std::uint32_t>(bytes[k + 2]) << 8) | bytes[k + 3];
    };

    int width = 0, height = 0;
    std::vector<std::uint8_t> idat;
    std::size_t k = 8;
    while (k + 12 <= bytes.size()) {
        std::uint32_t len = be32(k);
        require(k + 12 + len <= bytes.size(), "png: truncated chunk");
        std::string type(bytes.begin() + k + 4, bytes.begin() + k + 8);
        std::uint32_t stored_crc = be32(k + 8 + len);
        std::uint32_t crc = static_cast<std::uint32_t>(
            crc32(crc32(0L, Z_NULL, 0), bytes.data() + k + 4, static_cast<uInt>(4 + len)));
        require(crc == stored_crc, "png: chunk CRC mismatch");
        const std::uint8_t* payload = bytes.data() + k + 8;
        if (type == "IHDR") {
            require(len == 13, "png: bad IHDR length");
            width = static_cast<int>(be32(k + 8));
            height = static_cast<int>(be32(k + 12));
            require(payload[8] == 8 && payload[9] == 2 && payload[12] == 0,
                    "png: only 8-bit truecolor non-interlaced supported");
        } else if (type == "IDAT") {
            idat.insert(idat.end(), payload, payload + len);
        } else if (type == "IEND") {
            break;
        }
        k += 12 + len;
    }
    require(width >= 1 && height >= 1 && !idat.empty(), "png: missing IHDR or IDAT");

    std::size_t stride = 1 + 3 * static_cast<std::size_t>(width);
    std::vector<std::uint8_t> raw(stride * height);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        fail("png: inflate failed");

    PixelImage img(width, height);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t* row = raw.data() + y * stride;
        int filter = row[0];
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) {
                std::size_t i = 1 + 3 * static_cast<std::size_t>(x) + c;
                int left = x > 0 ? (&img.at(x - 1, y).r)[c] : 0;
                int up = y > 0 ? (&img.at(x, y - 1).r)[c] : 0;
                int v;
                switch (filter) {
                    case 0: v = row[i]; break;
                    case 1: v = row[i] + left; break;
                    case 2: v = row[i] + up; break;
                    default: fail("png: unsupported filter %d", filter);
                }
                (&img.at(x, y).r)[c] = static_cast<std::uint8_t>(v & 0xff);
            }
    }
    return img;
}

inline PixelImage read_png(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) fail("png: cannot open '%s'", path.c_str());
    std::vector<std::uint8_t> bytes;
    char buf[65536];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0)
        bytes.insert(bytes.end(), buf, buf + got);
    std::fclose(f);
    return decode_png(bytes);
}

}  // namespace mgsms
