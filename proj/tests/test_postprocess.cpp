#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "yk/postprocess.hpp"
#include "yk/selfcheck.hpp"

using namespace yk;

TEST_CASE("letterbox of a 640x320 image pads 160 top and bottom") {
    Tensor4 img({1, 3, 320, 640}, 0.25f);
    auto [out, t] = letterbox(img, 640, 640);
    CHECK(t.scale == doctest::Approx(1.0));
    CHECK(t.pad_x == 0.0);
    CHECK(t.pad_y == 160.0);
    CHECK(out.shape == Shape4{1, 3, 640, 640});
    // pad rows are gray, content rows preserved
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(114.0f / 255.0f));
    CHECK(out.at(0, 0, 639, 0) == doctest::Approx(114.0f / 255.0f));
    CHECK(out.at(0, 0, 320, 100) == doctest::Approx(0.25f));
}

TEST_CASE("letterbox upscales a 100x50 image by 6.4") {
    Tensor4 img({1, 3, 50, 100}, 0.5f);
    auto [out, t] = letterbox(img, 640, 640);
    CHECK(t.scale == doctest::Approx(6.4));
    CHECK(t.pad_y == 160.0);  // content 640x320, centered
    CHECK(out.shape == Shape4{1, 3, 640, 640});
}

TEST_CASE("letterbox validates the target size") {
    Tensor4 img({1, 3, 10, 10}, 0.0f);
    CHECK_THROWS_AS(letterbox(img, 100, 100), Error);
}

TEST_CASE("bilinear resize preserves constant images") {
    Tensor4 img({1, 3, 7, 13}, 0.3f);
    const auto out = resize_bilinear(img, 20, 8);
    for (float v : out.data) CHECK(v == doctest::Approx(0.3f));
}

TEST_CASE("unletterbox inverts letterbox within a pixel") {
    const std::vector<std::pair<std::int64_t, std::int64_t>> sizes{
        {480, 640}, {640, 640}, {333, 517}, {1280, 720}};
    for (auto [h, w] : sizes) {
        Tensor4 img({1, 3, h, w}, 0.0f);
        auto [_, t] = letterbox(img, 640, 640);
        if (t.scale < 0.5) continue;
        Detection d{0, 1.0f, 100.5f, 80.25f, 300.0f, 200.0f};
        // map original -> letterboxed, then back
        Detection boxed = d;
        boxed.x1 = static_cast<float>(d.x1 * t.scale + t.pad_x);
        boxed.x2 = static_cast<float>(d.x2 * t.scale + t.pad_x);
        boxed.y1 = static_cast<float>(d.y1 * t.scale + t.pad_y);
        boxed.y2 = static_cast<float>(d.y2 * t.scale + t.pad_y);
        const auto back = unletterbox({boxed}, t)[0];
        CHECK(std::abs(back.x1 - d.x1) < 1.0f);
        CHECK(std::abs(back.y1 - d.y1) < 1.0f);
        CHECK(std::abs(back.x2 - d.x2) < 1.0f);
        CHECK(std::abs(back.y2 - d.y2) < 1.0f);
    }
}

TEST_CASE("decode matches the documented formulas") {
    RawPredictions p;
    p.task = Task::Detect;
    Tensor4 map({1, 5 + 2, 2, 2}, 0.0f);  // nc=2
    // one confident cell at (gy=1, gx=0)
    map.at(0, 4, 1, 0) = 3.0f;   // objectness
    map.at(0, 6, 1, 0) = 2.0f;   // class 1 logit
    map.at(0, 0, 1, 0) = 0.5f;   // dx
    map.at(0, 1, 1, 0) = -0.5f;  // dy
    map.at(0, 2, 1, 0) = 1.0f;   // log w
    map.at(0, 3, 1, 0) = 0.0f;   // log h
    p.maps.push_back(map);
    p.strides.push_back(16);

    const auto dets = decode(p, 0.5f);
    REQUIRE(dets.size() == 1);
    const auto& d = dets[0];
    CHECK(d.class_id == 1);
    CHECK(d.score == doctest::Approx(sigmoid(3.0f) * sigmoid(2.0f)));
    const float cx = (0.0f + sigmoid(0.5f)) * 16.0f;
    const float cy = (1.0f + sigmoid(-0.5f)) * 16.0f;
    const float bw = std::exp(1.0f) * 16.0f;
    const float bh = std::exp(0.0f) * 16.0f;
    CHECK(d.x1 == doctest::Approx(cx - bw / 2));
    CHECK(d.y1 == doctest::Approx(cy - bh / 2));
    CHECK(d.x2 == doctest::Approx(cx + bw / 2));
    CHECK(d.y2 == doctest::Approx(cy + bh / 2));
}

TEST_CASE("decode on all-zero maps yields uniform scores") {
    RawPredictions p;
    p.task = Task::Detect;
    p.maps.emplace_back(Shape4{1, 85, 4, 4}, 0.0f);
    p.strides.push_back(8);
    const auto dets = decode(p, 0.0f);
    REQUIRE(dets.size() == 16);
    for (const auto& d : dets) CHECK(d.score == doctest::Approx(0.25f));
}

TEST_CASE("decode caps the size exponent") {
    RawPredictions p;
    p.task = Task::Detect;
    Tensor4 map({1, 6, 1, 1}, 0.0f);
    map.at(0, 2, 0, 0) = 1000.0f;
    map.at(0, 4, 0, 0) = 10.0f;
    map.at(0, 5, 0, 0) = 10.0f;
    p.maps.push_back(map);
    p.strides.push_back(8);
    const auto dets = decode(p, 0.1f);
    REQUIRE(dets.size() == 1);
    CHECK(std::isfinite(dets[0].x2));
}

TEST_CASE("iou properties") {
    Detection a{0, 1.0f, 0, 0, 10, 10};
    Detection b{0, 1.0f, 5, 5, 15, 15};
    CHECK(iou(a, a) == doctest::Approx(1.0f));
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, b) == doctest::Approx(25.0f / 175.0f));
    Detection far{0, 1.0f, 100, 100, 110, 110};
    CHECK(iou(a, far) == 0.0f);
}

TEST_CASE("nms keeps the highest-scoring box per cluster") {
    std::vector<Detection> cands{
        {0, 0.9f, 0, 0, 10, 10},
        {0, 0.8f, 1, 1, 11, 11},   // overlaps the first
        {0, 0.7f, 50, 50, 60, 60},
        {1, 0.6f, 0, 0, 10, 10},   // other class: kept despite overlap
    };
    const auto kept = nms(cands, 0.45f);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].score == 0.9f);
    CHECK(kept[1].score == 0.7f);
    CHECK(kept[2].class_id == 1);
}

TEST_CASE("nms output properties on random instances") {
    for (int seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        std::vector<Detection> cands;
        for (int i = 0; i < 64; ++i) {
            Detection d;
            d.class_id = static_cast<int>(rng.next_u64() % 3);
            d.score = rng.uniform(0, 1);
            d.x1 = rng.uniform(0, 50);
            d.y1 = rng.uniform(0, 50);
            d.x2 = d.x1 + rng.uniform(1, 30);
            d.y2 = d.y1 + rng.uniform(1, 30);
            cands.push_back(d);
        }
        const auto kept = nms(cands, 0.5f);
        REQUIRE(kept.size() <= cands.size());
        for (size_t i = 1; i < kept.size(); ++i) REQUIRE(kept[i - 1].score >= kept[i].score);
        for (size_t i = 0; i < kept.size(); ++i)
            for (size_t j = i + 1; j < kept.size(); ++j)
                if (kept[i].class_id == kept[j].class_id)
                    REQUIRE(iou(kept[i], kept[j]) < 0.5f);
        // independent repeated-extraction oracle agrees
        const auto want = oracle::nms(cands, 0.5f);
        REQUIRE(kept.size() == want.size());
        for (size_t i = 0; i < kept.size(); ++i) {
            REQUIRE(kept[i].score == want[i].score);
            REQUIRE(kept[i].class_id == want[i].class_id);
        }
    }
}

TEST_CASE("nms deterministic tie-breaking") {
    std::vector<Detection> cands{
        {1, 0.5f, 20, 0, 30, 10},
        {0, 0.5f, 0, 0, 10, 10},
        {0, 0.5f, 40, 0, 50, 10},
    };
    const auto kept = nms(cands, 0.9f);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].class_id == 0);
    CHECK(kept[0].x1 == 0.0f);
    CHECK(kept[1].x1 == 40.0f);
    CHECK(kept[2].class_id == 1);
}

TEST_CASE("thresholds are validated") {
    RawPredictions p;
    p.task = Task::Detect;
    CHECK_THROWS_AS(decode(p, 1.5f), Error);
    CHECK_THROWS_AS(nms({}, -0.1f), Error);
}
