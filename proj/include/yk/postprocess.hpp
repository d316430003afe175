#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "yk/model.hpp"
#include "yk/tensor.hpp"

namespace yk {

struct LetterboxTransform {
    double scale = 1.0;
    double pad_x = 0.0, pad_y = 0.0;  // pixels added left/top
    std::int64_t orig_w = 0, orig_h = 0;
    std::int64_t target_w = 0, target_h = 0;
};

struct Detection {
    int class_id = 0;
    float score = 0.0f;
    float x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Bilinear resample with half-pixel centers.
inline Tensor4 resize_bilinear(const Tensor4& img, std::int64_t oh, std::int64_t ow) {
    const std::int64_t h = img.shape.h, w = img.shape.w;
    Tensor4 out({img.shape.n, img.shape.c, oh, ow});
    const double sy = static_cast<double>(h) / static_cast<double>(oh);
    const double sx = static_cast<double>(w) / static_cast<double>(ow);
    for (std::int64_t n = 0; n < img.shape.n; ++n)
        for (std::int64_t c = 0; c < img.shape.c; ++c) {
            const float* ip = img.plane(n, c);
            float* op = out.plane(n, c);
            for (std::int64_t y = 0; y < oh; ++y) {
                double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
                fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
                const auto y0 = static_cast<std::int64_t>(fy);
                const std::int64_t y1 = std::min(y0 + 1, h - 1);
                const double wy = fy - static_cast<double>(y0);
                for (std::int64_t x = 0; x < ow; ++x) {
                    double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
                    fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
                    const auto x0 = static_cast<std::int64_t>(fx);
                    const std::int64_t x1 = std::min(x0 + 1, w - 1);
                    const double wx = fx - static_cast<double>(x0);
                    const double v =
                        (1 - wy) * ((1 - wx) * ip[y0 * w + x0] + wx * ip[y0 * w + x1]) +
                        wy * ((1 - wx) * ip[y1 * w + x0] + wx * ip[y1 * w + x1]);
                    op[y * ow + x] = static_cast<float>(v);
                }
            }
        }
    return out;
}

// Aspect-preserving resize onto a gray (114/255) canvas, content centered.
inline std::pair<Tensor4, LetterboxTransform> letterbox(const Tensor4& image,
                                                        std::int64_t target_h,
                                                        std::int64_t target_w) {
    check(image.shape.h >= 1 && image.shape.w >= 1, "letterbox: zero-sized image");
    check(target_h % 32 == 0 && target_w % 32 == 0,
          "letterbox: target dims must be divisible by 32");

    LetterboxTransform t;
    t.orig_w = image.shape.w;
    t.orig_h = image.shape.h;
    t.target_w = target_w;
    t.target_h = target_h;
    t.scale = std::min(static_cast<double>(target_w) / static_cast<double>(image.shape.w),
                       static_cast<double>(target_h) / static_cast<double>(image.shape.h));
    const auto cw = static_cast<std::int64_t>(
        std::floor(static_cast<double>(image.shape.w) * t.scale + 0.5));
    const auto ch = static_cast<std::int64_t>(
        std::floor(static_cast<double>(image.shape.h) * t.scale + 0.5));
    const std::int64_t ox = (target_w - cw) / 2;
    const std::int64_t oy = (target_h - ch) / 2;
    t.pad_x = static_cast<double>(ox);
    t.pad_y = static_cast<double>(oy);

    Tensor4 content =
        (cw == image.shape.w && ch == image.shape.h) ? image : resize_bilinear(image, ch, cw);

    Tensor4 out({image.shape.n, image.shape.c, target_h, target_w}, 114.0f / 255.0f);
    for (std::int64_t n = 0; n < image.shape.n; ++n)
        for (std::int64_t c = 0; c < image.shape.c; ++c) {
            const float* ip = content.plane(n, c);
            float* op = out.plane(n, c);
            for (std::int64_t y = 0; y < ch; ++y)
                std::copy(ip + y * cw, ip + (y + 1) * cw, op + (oy + y) * target_w + ox);
        }
    return {std::move(out), t};
}

// Raw maps -> per-cell candidates in letterboxed pixel coordinates.
// score = sigmoid(objectness) * max_c sigmoid(class logit); boxes use
// sigmoid cell offsets for the center and exp(raw) * stride for the size.
inline std::vector<Detection> decode(const RawPredictions& preds, float conf_thresh) {
    check(conf_thresh >= 0.0f && conf_thresh <= 1.0f, "decode: conf threshold out of range");
    std::vector<Detection> out;
    for (size_t mi = 0; mi < preds.maps.size(); ++mi) {
        const Tensor4& map = preds.maps[mi];
        const auto stride = static_cast<float>(preds.strides[mi]);
        const std::int64_t nc = map.shape.c - 5;
        for (std::int64_t n = 0; n < map.shape.n; ++n)
            for (std::int64_t gy = 0; gy < map.shape.h; ++gy)
                for (std::int64_t gx = 0; gx < map.shape.w; ++gx) {
                    const float obj = sigmoid(map.at(n, 4, gy, gx));
                    int best_c = 0;
                    float best_l = map.at(n, 5, gy, gx);
                    for (std::int64_t c = 1; c < nc; ++c) {
                        const float l = map.at(n, 5 + c, gy, gx);
                        if (l > best_l) {
                            best_l = l;
                            best_c = static_cast<int>(c);
                        }
                    }
                    const float score = obj * sigmoid(best_l);
                    if (score < conf_thresh) continue;
                    const float cx =
                        (static_cast<float>(gx) + sigmoid(map.at(n, 0, gy, gx))) * stride;
                    const float cy =
                        (static_cast<float>(gy) + sigmoid(map.at(n, 1, gy, gx))) * stride;
                    // cap the exponent so degenerate raw maps stay finite
                    const float bw = std::exp(std::min(map.at(n, 2, gy, gx), 60.0f)) * stride;
                    const float bh = std::exp(std::min(map.at(n, 3, gy, gx), 60.0f)) * stride;
                    out.push_back({best_c, score, cx - bw / 2, cy - bh / 2, cx + bw / 2,
                                   cy + bh / 2});
                }
    }
    return out;
}

inline float iou(const Detection& a, const Detection& b) {
    const float ix1 = std::max(a.x1, b.x1);
    const float iy1 = std::max(a.y1, b.y1);
    const float ix2 = std::min(a.x2, b.x2);
    const float iy2 = std::min(a.y2, b.y2);
    const float iw = std::max(0.0f, ix2 - ix1);
    const float ih = std::max(0.0f, iy2 - iy1);
    const float inter = iw * ih;
    const float area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
    const float area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
    const float uni = area_a + area_b - inter;
    return uni > 0.0f ? inter / uni : 0.0f;
}

// Greedy class-aware suppression; ordering (score desc, class asc, x1 asc)
// is deterministic by construction.
inline std::vector<Detection> nms(std::vector<Detection> cands, float iou_thresh) {
    check(iou_thresh >= 0.0f && iou_thresh <= 1.0f, "nms: iou threshold out of range");
    std::sort(cands.begin(), cands.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.class_id != b.class_id) return a.class_id < b.class_id;
        return a.x1 < b.x1;
    });
    std::vector<Detection> kept;
    for (const auto& c : cands) {
        bool ok = true;
        for (const auto& k : kept) {
            if (k.class_id == c.class_id && iou(k, c) >= iou_thresh) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(c);
    }
    return kept;
}

inline std::vector<Detection> unletterbox(std::vector<Detection> dets,
                                          const LetterboxTransform& t) {
    for (auto& d : dets) {
        d.x1 = std::clamp(static_cast<float>((d.x1 - t.pad_x) / t.scale), 0.0f,
                          static_cast<float>(t.orig_w));
        d.x2 = std::clamp(static_cast<float>((d.x2 - t.pad_x) / t.scale), 0.0f,
                          static_cast<float>(t.orig_w));
        d.y1 = std::clamp(static_cast<float>((d.y1 - t.pad_y) / t.scale), 0.0f,
                          static_cast<float>(t.orig_h));
        d.y2 = std::clamp(static_cast<float>((d.y2 - t.pad_y) / t.scale), 0.0f,
                          static_cast<float>(t.orig_h));
    }
    return dets;
}

}  // namespace yk
