#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dt/dataset.hpp"
#include "dt/tracker.hpp"

namespace dt {

enum class TrainMode { supervised, unsupervised };

struct TrainConfig {
    TrainMode mode = TrainMode::unsupervised;
    double lr = 0.9;
    int iterations = 50000;
    int bptt_len = 40;       // gradient window length (truncated BPTT)
    int dropout_len = 10;    // length n of each dropped observation block
    double dropout_duty = 0.5;  // fraction of steps dropped
    std::uint64_t seed = 0;
    double init_scale = 1.0;
    double recurrent_gain = 0.0;  // identity-style belief self-tap at init (see init_params)
    bool full_sequence = false;  // backpropagate through whole sequences instead
    bool sum_loss = false;       // raw summed BCE instead of per-cell/per-step means
    int checkpoint_interval = 0;  // write a checkpoint every k iterations; 0 = off
    std::string checkpoint_prefix;

    void validate() const;  // throws std::invalid_argument
};

// One step of a training window, fully materialized.
struct StepPlan {
    Tensor input;   // (H,W,2) as fed to the network; all-zero on dropped steps
    Tensor target;  // (H,W,1), only read where mask = 1
    Tensor mask;    // (H,W,1) in {0,1}
    bool dropped = false;
    bool has_loss = false;  // mask has at least one nonzero cell
};
using TargetPlan = std::vector<StepPlan>;

// Dropout schedule over a sequence: flags[t] = 1 means step t's observation
// is withheld. Dropped steps come in contiguous blocks of exactly
// dropout_len, separated by at least one observed step, and step 0 is always
// observed. The number of blocks is round(seq_len * duty / dropout_len);
// observed slack is spread over the gaps uniformly at random, so the duty
// fraction is met exactly (up to block granularity) for every seed.
std::vector<std::uint8_t> build_dropout_schedule(int seq_len, int dropout_len, double duty,
                                                 std::uint64_t seed);

// Materializes the window [begin, end) of sequence `seq` as network inputs,
// targets and masks.
//   supervised:   input = observation, target = ground truth y, mask = 1
//   unsupervised: input zeroed on dropped steps; dropped steps are graded on
//                 what the sensor would have seen (target = r, mask = v) and
//                 observed steps carry no loss at all
// `schedule` is indexed by absolute step and may be empty in supervised mode.
TargetPlan build_targets(const Dataset& data, int seq, int begin, int end,
                         const std::vector<std::uint8_t>& schedule, TrainMode mode);

struct BpttResult {
    double loss = 0.0;
    TrackerGrads grads;
    Tensor final_belief;  // belief after the last step
};

// Loss and exact parameter gradients over one window via backpropagation
// through time. The chain starts at the learned initial belief B_0 (with
// gradients flowing into b0) unless carried_belief is given, in which case
// the window continues from that fixed state and b0 gets no gradient.
// Default loss is the mean over steps of per-cell-mean masked BCE;
// sum_loss = true switches both reductions to raw sums. Throws on a
// non-finite loss, naming the first offending step.
BpttResult bptt_gradients(const TrackerParams& params, const TargetPlan& plan,
                          const Tensor* carried_belief = nullptr, bool sum_loss = false);

struct TrainResult {
    TrackerParams params;
    std::vector<double> loss_curve;  // one entry per iteration
};

// SGD over sampled windows: each iteration draws a sequence and a window
// start uniformly at random, draws a fresh dropout schedule for that window
// (unsupervised mode), runs bptt_gradients from the learned initial belief
// B_0 and applies one update — so b0 receives gradient every iteration.
// full_sequence = true always takes the whole sequence as the window.
// Deterministic given config.seed. If the loss turns non-finite the loop
// aborts with the last finite parameters checkpointed (when a prefix is
// configured) and an exception.
TrainResult train(const Dataset& data, const TrainConfig& config);
TrainResult train(const Dataset& data, const TrainConfig& config, const TrackerParams& initial);

// CSV with header "iteration,loss" and one row per iteration (1-based).
void write_loss_csv(const std::string& path, const std::vector<double>& curve);

}  // namespace dt
