// End-to-end tests that drive the command-line binary. The path to the
// binary comes from the DLASEG_CLI environment variable (set by ctest).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dlaseg/data.hpp"
#include "dlaseg/train.hpp"

using namespace dlaseg;
namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* p = std::getenv("DLASEG_CLI");
    REQUIRE_MESSAGE(p != nullptr, "DLASEG_CLI must point at the binary");
    return p;
}

int run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* tag) {
        path = fs::temp_directory_path() / (std::string("dlaseg_cli_") + tag + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("--help exits 0 on every subcommand") {
    CHECK(run("--help") == 0);
    for (const char* sub : {"generate", "train", "eval", "fuse", "render"})
        CHECK(run(std::string(sub) + " --help") == 0);
}

TEST_CASE("invalid flags exit 2") {
    CHECK(run("generate --no-such-flag --out /tmp/x") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("") == 2);  // missing subcommand
}

TEST_CASE("generate: count contract and byte-identical rerun") {
    TempDir a("gen_a"), b("gen_b");
    CHECK(run("generate --count 10 --seed 7 --out " + a.path.string()) == 0);
    CHECK(run("generate --count 10 --seed 7 --out " + b.path.string()) == 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a.path)) {
        CHECK(slurp(e.path()) == slurp(b.path / e.path().filename()));
        ++files;
    }
    CHECK(files == 31);  // 10 triples + manifest
    CHECK(load_manifest(a.path).count == 10);
}

TEST_CASE("generate: invalid spec field exits 2") {
    TempDir d("gen_bad");
    std::ofstream(d.path / "spec.json") << R"({"height": 60})";
    CHECK(run("generate --spec " + (d.path / "spec.json").string() + " --out " +
              d.path.string()) == 2);
    std::ofstream(d.path / "spec2.json") << R"({"heigth": 64})";  // unknown key
    CHECK(run("generate --spec " + (d.path / "spec2.json").string() + " --out " +
              d.path.string()) == 2);
}

TEST_CASE("train / eval / fuse / render pipeline") {
    TempDir d("pipe");
    const fs::path ds = d.path / "ds", out = d.path / "run";
    const std::string small =
        " --set model.enc_channels=[4,8,8,8] --set model.dec_channels=[8,8,8,8]";

    REQUIRE(run("generate --count 8 --seed 3 --out " + ds.string() +
                " --spec /dev/null" ) == 2);  // unreadable spec is a usage error
    REQUIRE(run("generate --count 8 --seed 3 --out " + ds.string()) == 0);

    SUBCASE("missing dataset exits 2") {
        CHECK(run("train --dataset " + (d.path / "nowhere").string() + " --out " +
                  out.string()) == 2);
    }

    SUBCASE("unknown config key exits 2") {
        CHECK(run("train --dataset " + ds.string() + " --out " + out.string() +
                  " --set train.learning_rat=1e-4") == 2);
    }

    SUBCASE("smoke run: 50 iterations, finite losses, then eval/fuse/render") {
        REQUIRE(run("train --dataset " + ds.string() + " --out " + out.string() +
                    " --set train.iterations=50 --set train.eval_every=0" + small) == 0);

        // loss history: 50 rows, all finite
        std::ifstream csv(out / "loss_history.csv");
        REQUIRE(csv.good());
        std::string line;
        std::getline(csv, line);  // header
        std::size_t rows = 0;
        while (std::getline(csv, line)) {
            ++rows;
            std::stringstream ss(line);
            std::string cell;
            std::getline(ss, cell, ',');  // iteration
            while (std::getline(ss, cell, ',')) CHECK(std::isfinite(std::stod(cell)));
        }
        CHECK(rows == 50);

        const fs::path ckpt = out / "checkpoint_final.dlac";
        REQUIRE(fs::exists(ckpt));

        // eval
        const fs::path metrics = out / "metrics.json";
        REQUIRE(run("eval --checkpoint " + ckpt.string() + " --dataset " + ds.string() +
                    " --out " + metrics.string()) == 0);
        const std::string js = slurp(metrics);
        CHECK(js.find("overall_accuracy") != std::string::npos);
        for (const char* name : kRoomClassNames) CHECK(js.find(name) != std::string::npos);

        // fuse + report, then fused eval must match exactly
        const fs::path fused = out / "fused.dlac";
        REQUIRE(run("fuse --in " + ckpt.string() + " --out " + fused.string() +
                    " --probes 4 --report " + (out / "fuse.json").string()) == 0);
        const std::string report = slurp(out / "fuse.json");
        CHECK(report.find("max_abs_deviation_boundary") != std::string::npos);

        const fs::path metrics_fused = out / "metrics_fused.json";
        REQUIRE(run("eval --checkpoint " + fused.string() + " --dataset " + ds.string() +
                    " --out " + metrics_fused.string()) == 0);
        CHECK(slurp(metrics_fused) == slurp(metrics));

        // render: comparison strip is 3W + 2 wide
        const fs::path strip = out / "cmp.ppm";
        REQUIRE(run("render --checkpoint " + ckpt.string() + " --dataset " + ds.string() +
                    " --index 0 --out " + strip.string()) == 0);
        Tensor img = read_ppm(strip);
        CHECK(img.dims[2] == 3 * 64 + 2);
        CHECK(img.dims[1] == 64);
    }
}
