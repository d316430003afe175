#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "yk/config.hpp"
#include "yk/image_io.hpp"

using namespace yk;

namespace {
const std::string kConfigDir = YK_CONFIG_DIR;

std::string minimal(const std::string& layers) {
    return "[meta]\ntask=detect\nnc=2\n[scales]\nn=1.0,1.0,1024\n[layers]\n" + layers;
}

const std::string kDetectTail =
    "from=-1 repeats=1 module=Conv args=c=64,k=3,s=2\n"
    "from=-1 repeats=1 module=Conv args=c=64,k=3,s=2\n"
    "from=-1 repeats=1 module=Conv args=c=64,k=3,s=2\n"
    "from=0,1,2 repeats=1 module=Detect args=\n";
}  // namespace

TEST_CASE("shipped detect config parses") {
    const auto spec = parse_config(read_file(kConfigDir + "/yolo11-detect.cfg"));
    CHECK(spec.task == Task::Detect);
    CHECK(spec.num_classes == 80);
    CHECK(spec.layers.size() == 24);
    CHECK(spec.scales.size() == 5);
    CHECK(spec.c3k_promote == std::set<std::string>{"m", "l", "x"});
    CHECK(spec.layers.back().module == Module::Detect);
    CHECK(spec.layers.back().from == std::vector<int>{16, 19, 22});
}

TEST_CASE("rounding and repeat scaling rules") {
    CHECK(round_to_multiple_of_8(4.0) == 8);    // floor at 8
    CHECK(round_to_multiple_of_8(12.0) == 16);  // half rounds up
    CHECK(round_to_multiple_of_8(11.9) == 8);
    CHECK(round_to_multiple_of_8(20.0) == 24);
    CHECK(round_to_multiple_of_8(64.0) == 64);
    CHECK(scale_repeats(3, 0.33) == 1);
    CHECK(scale_repeats(6, 0.33) == 2);
    CHECK(scale_repeats(9, 0.33) == 3);
    CHECK(scale_repeats(1, 0.1) == 1);  // never below 1
    CHECK(scale_repeats(2, 0.5) == 1);
    CHECK(scale_repeats(3, 0.5) == 2);  // half rounds up
}

TEST_CASE("m-variant channel table for the shipped config") {
    const auto spec = parse_config(read_file(kConfigDir + "/yolo11-detect.cfg"));
    const auto m = apply_scale(spec, "m");
    // width 1.0, max_channels 512: everything passes through except the
    // 1024-channel declarations, which cap at 512
    CHECK(m.layers[0].c == 64);
    CHECK(m.layers[1].c == 128);
    CHECK(m.layers[2].c == 256);
    CHECK(m.layers[7].c == 512);   // 1024 capped
    CHECK(m.layers[9].c == 512);   // SPPF capped
    CHECK(m.layers[10].c == 512);  // C2PSA capped
    // m promotes every C3k2 to c3k=true
    for (const auto& l : m.layers)
        if (l.module == Module::C3k2) CHECK(l.c3k);
    // depth 0.5 halves the C2PSA repeats
    CHECK(m.layers[10].repeats == 1);
    // e=0.25 survives scaling on the early backbone stages
    CHECK(m.layers[2].e == doctest::Approx(0.25));
    CHECK(m.layers[13].e == doctest::Approx(0.5));
    CHECK(m.layers.back().dw);
}

TEST_CASE("n-variant keeps c3k=false where declared") {
    const auto spec = parse_config(read_file(kConfigDir + "/yolo11-detect.cfg"));
    const auto n = apply_scale(spec, "n");
    CHECK_FALSE(n.layers[2].c3k);
    CHECK(n.layers[6].c3k);
    CHECK(n.layers[0].c == 16);   // 64 * 0.25
    CHECK(n.layers[7].c == 256);  // 1024 * 0.25
}

TEST_CASE("from=-1 resolves to the previous layer") {
    const auto spec = parse_config(minimal(kDetectTail));
    const auto s = apply_scale(spec, "n");
    CHECK(s.layers[0].from == std::vector<int>{-1});  // network input
    CHECK(s.layers[1].from == std::vector<int>{0});
}

TEST_CASE("C2f defaults to no shortcut, C3k2 to shortcut") {
    const auto spec = parse_config(minimal(
        "from=-1 repeats=1 module=Conv args=c=64,k=3,s=2\n"
        "from=-1 repeats=1 module=C2f args=c=64\n"
        "from=-1 repeats=1 module=C3k2 args=c=64\n"
        "from=0,1,2 repeats=1 module=Detect args=\n"));
    const auto s = apply_scale(spec, "n");
    CHECK_FALSE(s.layers[1].shortcut);
    CHECK(s.layers[2].shortcut);
}

TEST_CASE("parse errors carry line numbers") {
    CHECK_THROWS_WITH_AS(
        parse_config(minimal("from=3 repeats=1 module=Conv args=c=64\n" + kDetectTail)),
        doctest::Contains("forward reference at line"), Error);
    CHECK_THROWS_WITH_AS(
        parse_config(minimal("from=-1 repeats=1 module=Bogus args=\n" + kDetectTail)),
        doctest::Contains("unknown module name"), Error);
    CHECK_THROWS_WITH_AS(
        parse_config(minimal(
            "from=-1 repeats=1 module=Conv args=c=64,k=3,s=2\n"
            "from=-1 repeats=1 module=Conv args=c=64,k=3,s=2\n"
            "from=-1,0,1 repeats=1 module=Detect args=\n"
            "from=-1,0,1 repeats=1 module=Detect args=\n")),
        doctest::Contains("duplicate head"), Error);
    CHECK_THROWS_AS(parse_config(minimal(
                        "from=-1 repeats=1 module=Conv args=c=64,k=3,s=2\n"
                        "from=-1,0 repeats=1 module=Detect args=\n")),
                    Error);  // Detect needs exactly three sources
    CHECK_THROWS_AS(parse_config("[meta]\nnc=2\n[scales]\nn=1,1,8\n[layers]\n" + kDetectTail),
                    Error);  // missing task
    CHECK_THROWS_AS(parse_config(minimal(kDetectTail +
                                         "from=-1 repeats=1 module=Conv args=c=64\n")),
                    Error);  // head must be last
    CHECK_THROWS_AS(parse_config(minimal("from=-1 repeats=0 module=Conv args=c=64\n" +
                                         kDetectTail)),
                    Error);
    // arg values are validated lazily, when the scale is applied
    CHECK_THROWS_AS(apply_scale(parse_config(minimal(
                        "from=-1 repeats=1 module=Conv args=c=abc\n" + kDetectTail)), "n"),
                    Error);
}

TEST_CASE("task and head module must agree") {
    CHECK_THROWS_AS(parse_config("[meta]\ntask=classify\nnc=10\n[scales]\nn=1,1,1024\n"
                                 "[layers]\n" + kDetectTail),
                    Error);
}

TEST_CASE("unknown variant is rejected") {
    const auto spec = parse_config(minimal(kDetectTail));
    CHECK_THROWS_WITH_AS(apply_scale(spec, "xxl"), doctest::Contains("unknown variant"),
                         Error);
}

TEST_CASE("classify config parses and keeps its head width unscaled") {
    const auto spec = parse_config(read_file(kConfigDir + "/yolo11-classify.cfg"));
    CHECK(spec.task == Task::Classify);
    CHECK(spec.num_classes == 1000);
    const auto n = apply_scale(spec, "n");
    CHECK(n.layers.back().module == Module::Classify);
    CHECK(n.layers.back().c == 1280);  // not width-scaled
}

TEST_CASE("comments and blank lines are ignored") {
    const auto spec = parse_config("# leading comment\n\n[meta]\ntask=detect\nnc=2\n"
                                   "[scales]\nn = 1.0, 1.0, 1024  # inline\n[layers]\n" +
                                   kDetectTail);
    CHECK(spec.layers.size() == 4);
}
