#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "yk/image_io.hpp"
#include "yk/rng.hpp"

namespace {

const std::string kCli = YK_CLI_PATH;
const std::string kConfigDir = YK_CONFIG_DIR;
const std::string kDetectCfg = kConfigDir + "/yolo11-detect.cfg";

struct RunResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run(const std::string& args) {
    const std::string out = "cli_stdout.tmp", err = "cli_stderr.tmp";
    const std::string cmd = kCli + " " + args + " >" + out + " 2>" + err;
    const int rc = std::system(cmd.c_str());
    RunResult r;
    r.code = WEXITSTATUS(rc);
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

// deterministic noise image fixture
std::string make_ppm(const std::string& path, int w, int h, std::uint64_t seed) {
    std::string bytes = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    yk::Rng rng(seed);
    for (int i = 0; i < w * h * 3; ++i)
        bytes.push_back(static_cast<char>(rng.next_u64() % 256));
    yk::write_file(path, bytes);
    return path;
}

}  // namespace

TEST_CASE("summary happy path") {
    const auto r = run("summary --config " + kDetectCfg + " --variant n");
    CHECK(r.code == 0);
    CHECK(r.out.find("Detect") != std::string::npos);
    CHECK(r.out.find("total") != std::string::npos);
}

TEST_CASE("validation errors exit 1 with usage text") {
    CHECK(run("bogus-subcommand").code == 1);
    CHECK(run("summary --no-such-flag").code == 1);
    CHECK(run("summary").code == 1);  // missing required --config
    CHECK(run("").code == 1);         // subcommand required
}

TEST_CASE("runtime errors exit 2 and name the problem") {
    const auto r = run("infer --config " + kDetectCfg + " --image missing.ppm");
    CHECK(r.code == 2);
    CHECK(r.err.find("missing.ppm") != std::string::npos);

    yk::write_file("bad.cfg", "[meta]\ntask=detect\n");
    CHECK(run("summary --config bad.cfg").code == 2);

    CHECK(run("summary --config " + kDetectCfg + " --variant q").code == 2);
}

TEST_CASE("--out file content equals the stdout stream") {
    const auto streamed = run("params --config " + kDetectCfg + " --variant n");
    REQUIRE(streamed.code == 0);
    const auto filed =
        run("params --config " + kDetectCfg + " --variant n --out params_out.tmp");
    REQUIRE(filed.code == 0);
    CHECK(filed.out.empty());
    CHECK(slurp("params_out.tmp") == streamed.out);
}

TEST_CASE("params --json emits the pinned schema") {
    const auto r = run("params --config " + kDetectCfg + " --variant n --json");
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("model").at("variant") == "n");
    CHECK(j.at("model").at("params").get<std::int64_t>() > 1000000);
    CHECK(j.at("per_layer").is_array());
}

TEST_CASE("flops reports FLOPs as twice MACs") {
    const auto r = run("flops --config " + kDetectCfg + " --variant n --imgsz 320 --json");
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("model").at("flops").get<std::int64_t>() ==
          2 * j.at("model").at("macs").get<std::int64_t>());
}

TEST_CASE("compare reports the parameter ratio") {
    const auto r = run("compare --config-a " + kDetectCfg + " --variant-a n --config-b " +
                       kConfigDir + "/yolov8-ref.cfg --variant-b n");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("param_ratio") != std::string::npos);
}

TEST_CASE("infer is byte-identical across runs and honors --out") {
    make_ppm("fixture.ppm", 96, 64, 42);
    const std::string flags = "infer --config " + kDetectCfg +
                              " --variant n --image fixture.ppm --imgsz 320 --conf 0.01";
    const auto r1 = run(flags);
    const auto r2 = run(flags);
    REQUIRE(r1.code == 0);
    CHECK(r1.out == r2.out);
    CHECK(!r1.out.empty());  // conf 0.01 on random weights yields detections

    // every line is a valid DetectionRecord
    std::istringstream is(r1.out);
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("class_id").is_number_integer());
        CHECK(j.at("score").is_number());
        CHECK(j.at("box").size() == 4);
        ++lines;
    }
    CHECK(lines > 0);

    const auto r3 = run(flags + " --out infer_out.tmp");
    REQUIRE(r3.code == 0);
    CHECK(slurp("infer_out.tmp") == r1.out);
}

TEST_CASE("infer accepts YTEN input") {
    yk::Rng rng(7);
    const auto t = yk::random_tensor<float>({1, 3, 64, 64}, rng, 0.0f, 1.0f);
    yk::write_file("fixture.yten", yk::save_yten(t));
    const auto r = run("infer --config " + kDetectCfg +
                       " --variant n --image fixture.yten --imgsz 320");
    CHECK(r.code == 0);
}

TEST_CASE("bench prints latency stats") {
    const auto r = run("bench --config " + kDetectCfg +
                       " --variant n --imgsz 64 --iters 2 --warmup 0");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("median_ms") != std::string::npos);
}

TEST_CASE("gradcheck passes clean and fails with the fault hook") {
    const auto clean = run("gradcheck");
    CHECK(clean.code == 0);
    CHECK(clean.out.find("op.conv2d") != std::string::npos);
    CHECK(clean.out.find("block.c2psa") != std::string::npos);

    const auto faulted = run("gradcheck --inject-fault");
    CHECK(faulted.code != 0);
    CHECK(faulted.out.find("fault-injection") != std::string::npos);
}

TEST_CASE("selftest passes clean and fails with the fault hook") {
    const auto clean = run("selftest --instances 20");
    CHECK(clean.code == 0);
    CHECK(clean.out.find("FAIL") == std::string::npos);

    const auto faulted = run("selftest --instances 5 --inject-fault");
    CHECK(faulted.code != 0);
    CHECK(faulted.out.find("FAIL c3k2-equals-c2f") != std::string::npos);
}
