// Drives the installed CLI binary (path baked in as DKSG_BIN) end to end:
// the pinned command examples plus the error-path contract.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dksg/data.hpp"
#include "dksg/pnm.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr merged
};

CmdResult run(const std::string& cmd) {
    CmdResult r;
    FILE* p = popen((cmd + " 2>&1").c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    while (fgets(buf, sizeof(buf), p)) r.output += buf;
    int rc = pclose(p);
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return r;
}

// one tiny dataset + one-epoch training run shared by the cases below
struct Fixture {
    std::string base, ds, out;
};

std::string& fixture_base() {
    static std::string p;
    return p;
}

void cleanup_fixture() {
    if (!fixture_base().empty()) fs::remove_all(fixture_base());
}

const Fixture& fixture() {
    static Fixture f = [] {
        Fixture fx;
        fx.base = (fs::temp_directory_path() / ("dksg_test_cli_" + std::to_string(::getpid())))
                      .string();
        fixture_base() = fx.base;
        std::atexit(cleanup_fixture);
        fx.ds = fx.base + "/ds";
        fx.out = fx.base + "/run";
        fs::remove_all(fx.base);
        fs::create_directories(fx.base);
        CmdResult g =
            run(std::string(DKSG_BIN) + " gen-data --count 6 --size 32 --seed 5 --out " + fx.ds);
        REQUIRE(g.exit_code == 0);
        std::ofstream cfg(fx.base + "/tiny.cfg");
        cfg << "epochs = 1\nbatch_size = 2\nimage_size = 32\nseed = 11\n"
            << "channels = [4, 4, 6, 6, 8]\nblocks_per_stage = 1\nc_d = 4\nd_model = 8\n";
        cfg.close();
        CmdResult t = run(std::string(DKSG_BIN) + " train --config " + fx.base +
                          "/tiny.cfg --data " + fx.ds + " --out " + fx.out);
        REQUIRE(t.exit_code == 0);
        return fx;
    }();
    return f;
}

}  // namespace

TEST_CASE("selftest exits 0 on a fresh build") {
    CmdResult r = run(std::string(DKSG_BIN) + " selftest");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("FAIL") == std::string::npos);
}

TEST_CASE("eval of an untrained checkpoint stays inside the random-predictor envelope") {
    const Fixture& fx = fixture();
    std::string csv = fx.base + "/untrained.csv";
    CmdResult r = run(std::string(DKSG_BIN) + " eval --checkpoint " + fx.out +
                      "/checkpoint_init.dksg --data " + fx.ds + " --out " + csv);
    CHECK(r.exit_code == 0);

    // pull the trailing MEAN row
    std::ifstream f(csv);
    REQUIRE(f.good());
    std::string line, mean_row;
    while (std::getline(f, line))
        if (line.rfind("MEAN,", 0) == 0) mean_row = line;
    REQUIRE(!mean_row.empty());
    double m[8];
    REQUIRE(std::sscanf(mean_row.c_str(), "MEAN,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &m[0], &m[1],
                        &m[2], &m[3], &m[4], &m[5], &m[6], &m[7]) == 8);
    for (double v : m) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // a predictor that marks pixels foreground at any fixed rate q scores
    // dice 2qf/(q+f) <= 2f/(1+f) against masks with foreground fraction f;
    // untrained output must sit in that band, nowhere near trained quality
    std::vector<dksg::Sample> samples = dksg::load_dataset(fx.ds);
    double fg = 0.0;
    for (const auto& s : samples)
        fg += static_cast<double>(s.mask.array().sum()) / s.mask.numel();
    fg /= static_cast<double>(samples.size());
    double envelope = 2.0 * fg / (1.0 + fg);
    CHECK(m[3] <= envelope + 0.1);  // dice column
}

TEST_CASE("predicted mask dimensions equal the input image dimensions") {
    const Fixture& fx = fixture();
    std::string in = fx.ds + "/images/sample_00002.ppm";
    std::string out = fx.base + "/pred.pgm";
    CmdResult r = run(std::string(DKSG_BIN) + " predict --checkpoint " + fx.out +
                      "/checkpoint.dksg --image " + in + " --out " + out);
    CHECK(r.exit_code == 0);
    dksg::Tensor img = dksg::load_ppm(in);
    dksg::Tensor mask = dksg::load_pgm_mask(out);
    CHECK(mask.dim(1) == img.dim(1));
    CHECK(mask.dim(2) == img.dim(2));
}

TEST_CASE("kernel and attention dumps have the documented shape") {
    const Fixture& fx = fixture();
    std::string attn = fx.base + "/attn.csv", kern = fx.base + "/kernel.csv";
    CmdResult r = run(std::string(DKSG_BIN) + " predict --checkpoint " + fx.out +
                      "/checkpoint.dksg --image " + fx.ds + "/images/sample_00000.ppm --out " +
                      fx.base + "/p0.pgm --dump-attn " + attn + " --dump-kernel " + kern);
    CHECK(r.exit_code == 0);

    std::ifstream fa(attn);
    std::string line;
    std::getline(fa, line);
    CHECK(line == "stage,a1,a2,a3,a4,a5");
    int rows = 0;
    double total = 0.0;
    while (std::getline(fa, line)) {
        int stage;
        double a[5];
        REQUIRE(std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf", &stage, &a[0], &a[1], &a[2],
                            &a[3], &a[4]) == 6);
        ++rows;
        for (double v : a) total += v;
    }
    CHECK(rows == 5);
    CHECK(total == doctest::Approx(5.0).epsilon(1e-4));  // five softmax rows

    std::ifstream fk(kern);
    std::getline(fk, line);
    CHECK(line == "stage,mean_gate,l2_kernel");
    rows = 0;
    bool saw_blank_gate = false;
    while (std::getline(fk, line)) {
        ++rows;
        if (line.rfind("5,,", 0) == 0) saw_blank_gate = true;  // stage 5 has no gate yet
    }
    CHECK(rows == 5);
    CHECK(saw_blank_gate);
}

TEST_CASE("every error path exits nonzero with a single-line error prefix") {
    auto expect_error = [](const std::string& args) {
        CmdResult r = run(std::string(DKSG_BIN) + " " + args);
        CHECK(r.exit_code != 0);
        CHECK(r.output.rfind("error:", 0) == 0);
        // single line: exactly one newline, at the end
        CHECK(r.output.find('\n') == r.output.size() - 1);
    };
    expect_error("gen-data --count 3 --bogus-flag --out /tmp/x");   // unknown flag
    expect_error("");                                               // missing subcommand
    expect_error("eval --checkpoint /nonexistent.dksg --data /tmp --out /tmp/x.csv");
    expect_error("train --config /nonexistent.cfg --data /tmp --out /tmp/x");

    CmdResult r = run("DKSG_THREADS=zero " + std::string(DKSG_BIN) + " selftest");
    CHECK(r.exit_code != 0);
    CHECK(r.output.rfind("error:", 0) == 0);
}
