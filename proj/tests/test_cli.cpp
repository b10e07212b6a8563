#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dt/dataset.hpp"
#include "dt/tracker.hpp"

namespace fs = std::filesystem;

namespace {

std::string bin() {
    const char* p = std::getenv("DTRACK_BIN");
    REQUIRE_MESSAGE(p != nullptr, "DTRACK_BIN must point at the dtrack executable");
    return p;
}

int run(const std::string& args, bool quiet = true) {
    std::string cmd = bin() + " " + args;
    if (quiet) cmd += " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

int run_env(const std::string& env, const std::string& args) {
    const std::string cmd = env + " " + bin() + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Workdir {
    fs::path dir;
    Workdir() : dir(fs::temp_directory_path() / "dt_cli_work") {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workdir() { fs::remove_all(dir); }
    std::string p(const char* name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("exit codes: help is 0, usage errors are 1") {
    CHECK(run("--help") == 0);
    CHECK(run("gen --help") == 0);
    CHECK(run("frobnicate") == 1);           // unknown subcommand
    CHECK(run("") == 1);                     // a subcommand is required
    CHECK(run("gen --sequences 1") == 1);    // missing required options
    CHECK(run("train --data x --out y --bogus") == 1);
}

TEST_CASE("exit codes: runtime failures are 2") {
    Workdir w;
    CHECK(run("eval --data " + w.p("nope.dtds") + " --model " + w.p("nope.dtpk") +
              " --report " + w.p("r.json")) == 2);
    CHECK(run("train --data " + w.p("missing.dtds") + " --out " + w.p("m.dtpk")) == 2);
    CHECK(run("gen --sequences 1 --length 4 --out " + w.p("x.dtds") + " --shape hexagon") == 2);
}

TEST_CASE("gen: writes a valid deterministic dataset") {
    Workdir w;
    const std::string flags = "gen --sequences 2 --length 6 --seed 5 --out ";
    REQUIRE(run(flags + w.p("a.dtds")) == 0);
    dt::Dataset d = dt::read_dataset(w.p("a.dtds"));
    CHECK(d.n_sequences == 2);
    CHECK(d.seq_len == 6);
    CHECK(d.grid_h == 50);
    CHECK(d.has_ground_truth);
    CHECK_NOTHROW(d.validate());

    REQUIRE(run(flags + w.p("b.dtds")) == 0);
    CHECK(slurp(w.p("a.dtds")) == slurp(w.p("b.dtds")));  // same seed, same bytes

    REQUIRE(run("gen --sequences 2 --length 6 --seed 6 --out " + w.p("c.dtds")) == 0);
    CHECK(slurp(w.p("a.dtds")) != slurp(w.p("c.dtds")));
}

TEST_CASE("gen: DT_SEED wins over --seed") {
    Workdir w;
    REQUIRE(run_env("DT_SEED=9", "gen --sequences 1 --length 4 --seed 5 --out " + w.p("env.dtds")) == 0);
    REQUIRE(run("gen --sequences 1 --length 4 --seed 9 --out " + w.p("nine.dtds")) == 0);
    REQUIRE(run("gen --sequences 1 --length 4 --seed 5 --out " + w.p("five.dtds")) == 0);
    CHECK(slurp(w.p("env.dtds")) == slurp(w.p("nine.dtds")));
    CHECK(slurp(w.p("env.dtds")) != slurp(w.p("five.dtds")));
}

TEST_CASE("gen: flags shape the world") {
    Workdir w;
    REQUIRE(run("gen --sequences 1 --length 3 --seed 2 --min-objects 4 --max-objects 4"
                " --shape square --no-truth --out " + w.p("sq.dtds")) == 0);
    dt::Dataset d = dt::read_dataset(w.p("sq.dtds"));
    CHECK_FALSE(d.has_ground_truth);
    CHECK(d.channels() == 2);
}

TEST_CASE("full pipeline: gen, train, eval, filter, render") {
    Workdir w;
    REQUIRE(run("gen --sequences 2 --length 6 --seed 3 --out " + w.p("data.dtds")) == 0);

    const std::string train_flags = " --mode supervised --iters 2 --bptt 5 --lr 0.3 --seed 1";
    REQUIRE(run("train --data " + w.p("data.dtds") + " --out " + w.p("model.dtpk") + train_flags) == 0);
    dt::TrackerParams params = dt::load_tracker(w.p("model.dtpk"));
    CHECK(params.arch.is_reference_arch());

    // Loss curve: header plus one row per iteration.
    const std::string csv = slurp(w.p("model.loss.csv"));
    CHECK(csv.rfind("iteration,loss\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    // Deterministic retrain gives the identical checkpoint.
    REQUIRE(run("train --data " + w.p("data.dtds") + " --out " + w.p("model2.dtpk") + train_flags) == 0);
    CHECK(slurp(w.p("model.dtpk")) == slurp(w.p("model2.dtpk")));

    REQUIRE(run("eval --data " + w.p("data.dtds") + " --model " + w.p("model.dtpk") +
                " --report " + w.p("report.json") + " --dropped --dropout-len 2 --duty 0.4") == 0);
    auto j = nlohmann::json::parse(slurp(w.p("report.json")));
    CHECK(j.contains("masked_bce_occluded"));
    CHECK(j["baselines"].contains("copy_last"));
    CHECK(j.contains("dropped_eval"));
    CHECK(j["dropped_eval"].contains("masked_bce"));
    CHECK(j["per_frame"].size() == 12);

    REQUIRE(run("filter --data " + w.p("data.dtds") + " --model " + w.p("model.dtpk") +
                " --out " + w.p("frames") + " --seq 1 --predict 2") == 0);
    CHECK(fs::exists(w.dir / "frames" / "seq0001_t0000.pgm"));
    CHECK(fs::exists(w.dir / "frames" / "seq0001_t0007.pgm"));  // 6 filtered + 2 predicted
    CHECK_FALSE(fs::exists(w.dir / "frames" / "seq0001_t0008.pgm"));
    CHECK(fs::exists(w.dir / "frames" / "index.txt"));
    const std::string frame = slurp(w.dir / "frames" / "seq0001_t0000.pgm");
    CHECK(frame.rfind("P5\n50 50\n255\n", 0) == 0);
    CHECK(frame.size() == 13 + 2500);

    REQUIRE(run("render --data " + w.p("data.dtds") + " --model " + w.p("model.dtpk") +
                " --out " + w.p("render") + " --seq 0 --limit 2") == 0);
    CHECK(fs::exists(w.dir / "render" / "seq0000_t0001.pgm"));
    CHECK_FALSE(fs::exists(w.dir / "render" / "seq0000_t0002.pgm"));
    const std::string panel = slurp(w.dir / "render" / "seq0000_t0000.pgm");
    CHECK(panel.rfind("P5\n152 50\n255\n", 0) == 0);  // three panels and separators

    CHECK(run("filter --data " + w.p("data.dtds") + " --model " + w.p("model.dtpk") +
              " --out " + w.p("oops") + " --seq 7") == 2);
}

TEST_CASE("train: resume from a checkpoint") {
    Workdir w;
    REQUIRE(run("gen --sequences 1 --length 5 --seed 8 --out " + w.p("d.dtds")) == 0);
    REQUIRE(run("train --data " + w.p("d.dtds") + " --out " + w.p("m1.dtpk") +
                " --mode supervised --iters 1 --bptt 5 --seed 2 --lr 0.1") == 0);
    REQUIRE(run("train --data " + w.p("d.dtds") + " --out " + w.p("m2.dtpk") +
                " --mode supervised --iters 1 --bptt 5 --seed 2 --lr 0.1 --init " +
                w.p("m1.dtpk")) == 0);
    // The resumed run evaluates its first window at the loaded parameters, so
    // its loss differs from the fresh run's and the saved weights moved on.
    CHECK(slurp(w.p("m1.loss.csv")) != slurp(w.p("m2.loss.csv")));
    CHECK(slurp(w.p("m1.dtpk")) != slurp(w.p("m2.dtpk")));
    CHECK_NOTHROW(dt::load_tracker(w.p("m2.dtpk")));
}
