#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dt/nn_ops.hpp"
#include "dt/sensor.hpp"

namespace dt {

// Network dimensions. The defaults are the tracking architecture used
// throughout: (H,W,2) observation -> 7x7 conv -> (H,W,8) embedding ->
// [concat previous belief] -> 5x5 conv -> (H,W,16) belief -> 7x7 conv ->
// (H,W,1) occupancy probability, each conv followed by a sigmoid.
struct TrackerArch {
    int grid_h = 50;
    int grid_w = 50;
    int input_channels = 2;
    int embedding_channels = 8;
    int belief_channels = 16;
    int encoder_kernel = 7;
    int belief_kernel = 5;
    int decoder_kernel = 7;
    // The initial belief is a learned free parameter: a per-channel vector
    // tiled over the grid by default, or a full (H,W,C) tensor when per_cell
    // is set.
    bool per_cell_b0 = false;

    // Kernel + bias weights of the three conv layers (b0 excluded).
    int conv_weight_count() const;
    bool is_reference_arch() const;
    void validate() const;  // throws std::logic_error on inconsistency
};

struct TrackerParams {
    TrackerArch arch;
    ConvLayer encoder;  // input_channels -> embedding_channels
    ConvLayer belief;   // embedding + belief channels -> belief channels
    ConvLayer decoder;  // belief channels -> 1
    Tensor b0;          // (1,1,C) tiled, or (H,W,C) per-cell

    // Materializes the (H,W,C) initial belief B_0.
    Tensor initial_belief() const;
};

// Gradients congruent with TrackerParams, in the canonical parameter order.
struct TrackerGrads {
    std::vector<double> encoder_kernel, encoder_bias;
    std::vector<double> belief_kernel, belief_bias;
    std::vector<double> decoder_kernel, decoder_bias;
    std::vector<double> b0;
};

TrackerGrads make_zero_grads(const TrackerParams& params);

// Named views over the parameter/gradient storage in one fixed canonical
// order (encoder, belief, decoder kernels and biases, then b0_seed). The
// names double as the checkpoint parameter names.
struct ParamView {
    std::string name;
    std::span<double> values;
};
std::vector<ParamView> param_views(TrackerParams& params);
std::vector<ParamView> grad_views(TrackerGrads& grads);

// Every intermediate of one recurrent step, kept for the backward pass.
struct StepCache {
    Tensor input;      // what the encoder saw (observation or all-zero)
    Tensor embedding;  // sigma(conv_enc(input))
    Tensor belief_in;  // concat(embedding, previous belief) along channels
    Tensor belief;     // sigma(conv_bel(belief_in))
    Tensor prob;       // sigma(conv_dec(belief)), (H,W,1)
};

// Kernels uniform in (-s, s) with s = init_scale / sqrt(fan_in); biases and
// b0 start at zero. Deterministic given seed.
//
// A positive recurrent_gain g additionally writes an identity-style recurrent
// init into the belief layer: each belief channel's center tap onto its own
// previous value gets +g and its bias -g/2, so sigma(g*B - g/2) fixes B = 1/2
// with unit slope at g = 4 and the channel starts as a memory cell instead of
// a fast-forgetting random mix. A randomly initialized belief conv forgets
// almost everything within two or three steps, which leaves nothing for the
// unsupervised dropped-step loss to latch onto; the gain removes that
// bottleneck without prescribing what to remember.
TrackerParams init_params(const TrackerArch& arch, std::uint64_t seed, double init_scale = 1.0,
                          double recurrent_gain = 0.0);

// One recurrent update: B_t from B_{t-1} and the step's input tensor. When
// cache is non-null it receives all intermediates.
Tensor step_belief(const TrackerParams& params, const Tensor& prev_belief, const Tensor& input,
                   StepCache* cache = nullptr);
Tensor step_belief(const TrackerParams& params, const Tensor& prev_belief, const Observation& obs);

// p_t = sigma(conv_dec(B_t)).
Tensor decode(const TrackerParams& params, const Tensor& belief);

// Runs the belief chain from B_0 over the whole input list, decoding every
// step. Throws std::invalid_argument on an empty list. steps[t].belief and
// steps[t].prob are B_{t+1} and p_{t+1} in 1-based time.
std::vector<StepCache> forward_sequence(const TrackerParams& params,
                                        const std::vector<Tensor>& inputs);
std::vector<StepCache> forward_sequence(const TrackerParams& params,
                                        const std::vector<Observation>& observations);

// Checkpoint I/O ("DTPK" container, float32 payload). Loading reconstructs
// the architecture from the stored shapes; the grid size is supplied by the
// caller except in per-cell-b0 checkpoints, which pin it themselves.
void save_tracker(const std::string& path, const TrackerParams& params);
TrackerParams load_tracker(const std::string& path, int grid_h = 50, int grid_w = 50);

}  // namespace dt
