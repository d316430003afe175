#pragma once

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "yk/tensor.hpp"

namespace yk {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write file: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail("write failed: " + path);
}

// Binary PPM (P6, maxval 255) -> (1, 3, h, w) in [0, 1], channels RGB.
inline Tensor4 load_ppm(const std::string& bytes) {
    size_t pos = 2;  // past "P6"
    auto skip_ws = [&] {
        while (pos < bytes.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> std::int64_t {
        skip_ws();
        check(pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])),
              "corrupt PPM header");
        std::int64_t v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
            v = v * 10 + (bytes[pos++] - '0');
        return v;
    };
    const std::int64_t w = read_int();
    const std::int64_t h = read_int();
    const std::int64_t maxval = read_int();
    check(maxval == 255, "unsupported PPM maxval " + std::to_string(maxval));
    check(pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos])),
          "corrupt PPM header");
    ++pos;
    const size_t need = static_cast<size_t>(w * h * 3);
    check(bytes.size() - pos >= need,
          "expected " + std::to_string(need) + " bytes, got " +
              std::to_string(bytes.size() - pos));
    Tensor4 out({1, 3, h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                out.at(0, c, y, x) =
                    static_cast<float>(static_cast<unsigned char>(
                        bytes[pos + static_cast<size_t>((y * w + x) * 3 + c)])) /
                    255.0f;
    return out;
}

// RawTensorFile: "YTEN" u32 version=1, u32 ndim, ndim x u64 dims, f32 payload.
inline Tensor4 load_yten(const std::string& bytes) {
    check(bytes.size() >= 12, "corrupt YTEN header");
    std::uint32_t version = 0, ndim = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&ndim, bytes.data() + 8, 4);
    check(version == 1, "unsupported YTEN version " + std::to_string(version));
    check(ndim == 3 || ndim == 4, "YTEN ndim must be 3 or 4, got " + std::to_string(ndim));
    check(bytes.size() >= 12 + 8ull * ndim, "corrupt YTEN header");
    std::int64_t dims[4] = {1, 1, 1, 1};
    for (std::uint32_t i = 0; i < ndim; ++i) {
        std::uint64_t d = 0;
        std::memcpy(&d, bytes.data() + 12 + 8ull * i, 8);
        dims[4 - ndim + i] = static_cast<std::int64_t>(d);
    }
    const Shape4 shape{dims[0], dims[1], dims[2], dims[3]};
    const size_t need = static_cast<size_t>(shape.numel()) * 4;
    const size_t have = bytes.size() - (12 + 8ull * ndim);
    check(have == need,
          "expected " + std::to_string(need) + " bytes, got " + std::to_string(have));
    Tensor4 out(shape);
    std::memcpy(out.data.data(), bytes.data() + 12 + 8ull * ndim, need);
    return out;
}

inline std::string save_yten(const Tensor4& t) {
    std::string out;
    out.append("YTEN", 4);
    const std::uint32_t version = 1, ndim = 4;
    out.append(reinterpret_cast<const char*>(&version), 4);
    out.append(reinterpret_cast<const char*>(&ndim), 4);
    const std::int64_t dims[4] = {t.shape.n, t.shape.c, t.shape.h, t.shape.w};
    for (std::int64_t d : dims) {
        const auto u = static_cast<std::uint64_t>(d);
        out.append(reinterpret_cast<const char*>(&u), 8);
    }
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * 4);
    return out;
}

inline Tensor4 load_image(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return load_ppm(bytes);
    if (bytes.size() >= 4 && bytes.compare(0, 4, "YTEN") == 0) return load_yten(bytes);
    fail("unsupported image magic in " + path + " (want P6 PPM or YTEN)");
}

}  // namespace yk
