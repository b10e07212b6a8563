#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dt/pipeline.hpp"
#include "dt/tracker.hpp"
#include "oracles.hpp"

using namespace dt;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<Tensor> random_inputs(int n, Pcg32& rng) {
    std::vector<Tensor> v;
    for (int t = 0; t < n; ++t) {
        Tensor in(50, 50, 2);
        for (auto& x : in.flat()) x = rng.next_below(2);
        // Keep the invariant "occupied implies visible".
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 50; ++j)
                if (in(i, j, 1) == 1.0) in(i, j, 0) = 1.0;
        v.push_back(std::move(in));
    }
    return v;
}

}  // namespace

TEST_CASE("reference architecture has exactly 11193 conv weights") {
    TrackerArch a;
    CHECK(a.is_reference_arch());
    // 7*7*2*8+8, 5*5*24*16+16, 7*7*16*1+1
    CHECK(a.conv_weight_count() == 792 + 9616 + 785);
    CHECK(a.conv_weight_count() == 11193);

    TrackerParams p = init_params(a, 0);
    std::size_t total = p.encoder.weight_count() + p.belief.weight_count() + p.decoder.weight_count();
    CHECK(total == 11193);

    TrackerArch b;
    b.embedding_channels = 9;
    CHECK_FALSE(b.is_reference_arch());
    b.validate();  // still a self-consistent (non-reference) network

    TrackerArch c;
    c.encoder_kernel = 4;  // even kernel: no symmetric padding
    CHECK_THROWS_AS(c.validate(), std::logic_error);
    TrackerArch d;
    d.belief_channels = 0;
    CHECK_THROWS_AS(d.validate(), std::logic_error);
}

TEST_CASE("init_params: deterministic, bounded, biases and b0 zero") {
    TrackerArch a;
    TrackerParams p = init_params(a, 7);
    TrackerParams q = init_params(a, 7);
    CHECK(p.encoder.kernel == q.encoder.kernel);
    CHECK(p.belief.kernel == q.belief.kernel);
    CHECK(p.decoder.kernel == q.decoder.kernel);

    TrackerParams r = init_params(a, 8);
    CHECK_FALSE(p.encoder.kernel == r.encoder.kernel);

    for (double v : p.encoder.bias) CHECK(v == 0.0);
    for (double v : p.belief.bias) CHECK(v == 0.0);
    for (double v : p.b0.flat()) CHECK(v == 0.0);
    CHECK(p.b0.h() == 1);
    CHECK(p.b0.w() == 1);
    CHECK(p.b0.c() == 16);

    const double s_enc = 1.0 / std::sqrt(7.0 * 7.0 * 2.0);
    for (double v : p.encoder.kernel) CHECK(std::abs(v) <= s_enc);
    const double s_bel = 1.0 / std::sqrt(5.0 * 5.0 * 24.0);
    for (double v : p.belief.kernel) CHECK(std::abs(v) <= s_bel);

    // init_scale scales the bound.
    TrackerParams wide = init_params(a, 7, 2.0);
    bool any_above = false;
    for (double v : wide.encoder.kernel) any_above |= std::abs(v) > s_enc;
    CHECK(any_above);
}

TEST_CASE("zero parameters give a uniform 0.5 belief and probability") {
    TrackerArch a;
    TrackerParams p = init_params(a, 0, 0.0);
    Tensor b0 = p.initial_belief();
    REQUIRE(b0.h() == 50);
    REQUIRE(b0.c() == 16);
    for (double v : b0.flat()) CHECK(v == 0.0);

    Pcg32 rng(1);
    Tensor obs = oracle::random_tensor(50, 50, 2, rng, 0.0, 1.0);
    StepCache cache;
    Tensor b1 = step_belief(p, b0, obs, &cache);
    for (double v : b1.flat()) CHECK(v == 0.5);
    Tensor prob = decode(p, b1);
    for (double v : prob.flat()) CHECK(v == 0.5);
    CHECK(cache.belief_in.c() == 24);
    CHECK(cache.embedding.c() == 8);
}

TEST_CASE("step_belief: shape chain and purity") {
    TrackerArch a;
    TrackerParams p = init_params(a, 21);
    Pcg32 rng(2);
    Tensor obs = oracle::random_tensor(50, 50, 2, rng, 0.0, 1.0);
    Tensor b0 = p.initial_belief();
    Tensor b1a = step_belief(p, b0, obs);
    Tensor b1b = step_belief(p, b0, obs);
    CHECK(b1a == b1b);  // bit-identical: no hidden state anywhere
    REQUIRE(b1a.h() == 50);
    REQUIRE(b1a.w() == 50);
    REQUIRE(b1a.c() == 16);
    for (double v : b1a.flat()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("forward_sequence: chains steps and rejects empty input") {
    TrackerArch a;
    TrackerParams p = init_params(a, 3);
    Pcg32 rng(4);
    std::vector<Tensor> inputs = random_inputs(4, rng);
    auto steps = forward_sequence(p, inputs);
    REQUIRE(steps.size() == 4);

    // Manual chain must agree bit for bit.
    Tensor belief = p.initial_belief();
    for (int t = 0; t < 4; ++t) {
        belief = step_belief(p, belief, inputs[t]);
        CHECK(belief == steps[t].belief);
        CHECK(decode(p, belief) == steps[t].prob);
    }

    CHECK_THROWS_AS(forward_sequence(p, std::vector<Tensor>{}), std::invalid_argument);
}

TEST_CASE("forward_sequence: observation overload matches tensor overload") {
    TrackerArch a;
    TrackerParams p = init_params(a, 5);
    WorldConfig wc;
    wc.seed = 11;
    SensorConfig sc;
    SimSequence sim = simulate_sequence(wc, sc, 6);
    auto from_obs = forward_sequence(p, sim.observations);
    std::vector<Tensor> tensors;
    for (const auto& o : sim.observations) tensors.push_back(observation_to_input(o));
    auto from_tensors = forward_sequence(p, tensors);
    REQUIRE(from_obs.size() == from_tensors.size());
    for (std::size_t t = 0; t < from_obs.size(); ++t) {
        CHECK(from_obs[t].belief == from_tensors[t].belief);
        CHECK(from_obs[t].prob == from_tensors[t].prob);
    }
}

TEST_CASE("param_views: canonical order and live aliasing") {
    TrackerArch a;
    TrackerParams p = init_params(a, 1);
    auto views = param_views(p);
    REQUIRE(views.size() == 7);
    CHECK(views[0].name == "encoder.kernel");
    CHECK(views[1].name == "encoder.bias");
    CHECK(views[2].name == "belief.kernel");
    CHECK(views[3].name == "belief.bias");
    CHECK(views[4].name == "decoder.kernel");
    CHECK(views[5].name == "decoder.bias");
    CHECK(views[6].name == "b0_seed");
    CHECK(views[0].values.size() == 784);
    CHECK(views[2].values.size() == 9600);
    CHECK(views[6].values.size() == 16);
    views[6].values[3] = 0.75;
    CHECK(p.b0(0, 0, 3) == 0.75);

    TrackerGrads g = make_zero_grads(p);
    auto gv = grad_views(g);
    REQUIRE(gv.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(gv[i].name == views[i].name);
        CHECK(gv[i].values.size() == views[i].values.size());
    }
}

TEST_CASE("checkpoint round-trip is bit-exact at the file level") {
    TrackerArch a;
    TrackerParams p = init_params(a, 31);
    p.b0.fill(0.25);  // exactly representable in float32

    const std::string path1 = temp_path("dt_test_ckpt1.dtpk");
    const std::string path2 = temp_path("dt_test_ckpt2.dtpk");
    save_tracker(path1, p);
    TrackerParams q = load_tracker(path1);
    save_tracker(path2, q);

    std::ifstream f1(path1, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1.size() > 0);
    CHECK(b1 == b2);

    CHECK(q.arch.is_reference_arch());
    CHECK(q.b0(0, 0, 0) == 0.25);
    // float32 storage: loaded values are the rounded doubles.
    for (std::size_t i = 0; i < p.encoder.kernel.size(); ++i)
        CHECK(q.encoder.kernel[i] == static_cast<double>(static_cast<float>(p.encoder.kernel[i])));

    std::remove(path1.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint: per-cell b0 carries the grid size") {
    TrackerArch a;
    a.per_cell_b0 = true;
    TrackerParams p = init_params(a, 3);
    REQUIRE(p.b0.h() == 50);
    Pcg32 rng(6);
    for (auto& v : p.b0.flat()) v = rng.uniform(-0.5, 0.5);

    const std::string path = temp_path("dt_test_ckpt3.dtpk");
    save_tracker(path, p);
    TrackerParams q = load_tracker(path);
    CHECK(q.arch.per_cell_b0);
    CHECK(q.b0.h() == 50);
    CHECK(q.b0.w() == 50);
    CHECK(q.b0.c() == 16);
    for (std::size_t i = 0; i < p.b0.size(); ++i)
        CHECK(q.b0.data()[i] == static_cast<double>(static_cast<float>(p.b0.data()[i])));
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: malformed files are rejected") {
    const std::string path = temp_path("dt_test_ckpt_bad.dtpk");
    std::ofstream(path, std::ios::binary) << "DTXX junk";
    CHECK_THROWS(load_tracker(path));
    std::remove(path.c_str());
    CHECK_THROWS(load_tracker(temp_path("dt_no_such_file.dtpk")));
}

TEST_CASE("ten filter steps run in well under a second each") {
    TrackerArch a;
    TrackerParams p = init_params(a, 1);
    Pcg32 rng(77);
    std::vector<Tensor> inputs = random_inputs(10, rng);
    const auto start = std::chrono::steady_clock::now();
    auto steps = forward_sequence(p, inputs);
    const auto stop = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(stop - start).count();
    CHECK(steps.size() == 10);
    CHECK(ms / 10.0 < 500.0);
}
