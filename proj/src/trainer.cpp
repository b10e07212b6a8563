#include "dt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "dt/rng.hpp"

namespace dt {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
    if (iterations < 0) throw std::invalid_argument("train: iterations must be >= 0");
    if (bptt_len < 1) throw std::invalid_argument("train: bptt_len must be >= 1");
    if (dropout_len < 1) throw std::invalid_argument("train: dropout_len must be >= 1");
    if (dropout_duty < 0.0 || dropout_duty > 1.0)
        throw std::invalid_argument("train: dropout_duty must be in [0, 1]");
    if (mode == TrainMode::unsupervised && bptt_len < 2 * dropout_len)
        throw std::invalid_argument(
            "train: unsupervised mode needs bptt_len >= 2 * dropout_len, got " +
            std::to_string(bptt_len) + " < " + std::to_string(2 * dropout_len));
    if (!(init_scale >= 0.0)) throw std::invalid_argument("train: init_scale must be >= 0");
    if (!(recurrent_gain >= 0.0))
        throw std::invalid_argument("train: recurrent_gain must be >= 0");
    if (checkpoint_interval < 0)
        throw std::invalid_argument("train: checkpoint_interval must be >= 0");
}

std::vector<std::uint8_t> build_dropout_schedule(int seq_len, int dropout_len, double duty,
                                                 std::uint64_t seed) {
    if (seq_len < 2) throw std::invalid_argument("dropout schedule: seq_len must be >= 2");
    if (dropout_len < 1) throw std::invalid_argument("dropout schedule: dropout_len must be >= 1");
    if (duty < 0.0 || duty > 1.0)
        throw std::invalid_argument("dropout schedule: duty must be in [0, 1]");

    std::vector<std::uint8_t> flags(seq_len, 0);
    // Each block needs an observed step in front of it, so at most
    // seq_len / (dropout_len + 1) blocks fit.
    const int max_blocks = seq_len / (dropout_len + 1);
    const int n_blocks =
        std::min(max_blocks, static_cast<int>(std::llround(seq_len * duty / dropout_len)));
    if (n_blocks == 0) return flags;

    // Gap g_i precedes block i; g_{n_blocks} trails the last block. Leading
    // gaps get one mandatory observed step, the rest of the observed budget
    // is spread uniformly.
    std::vector<int> gaps(n_blocks + 1, 1);
    gaps.back() = 0;
    const int extra = seq_len - n_blocks * dropout_len - n_blocks;
    Pcg32 rng(seed);
    for (int e = 0; e < extra; ++e) ++gaps[rng.next_below(n_blocks + 1)];

    int t = 0;
    for (int b = 0; b < n_blocks; ++b) {
        t += gaps[b];
        for (int k = 0; k < dropout_len; ++k) flags[t++] = 1;
    }
    return flags;
}

TargetPlan build_targets(const Dataset& data, int seq, int begin, int end,
                         const std::vector<std::uint8_t>& schedule, TrainMode mode) {
    if (seq < 0 || seq >= data.n_sequences) throw std::invalid_argument("build_targets: bad seq");
    if (begin < 0 || end > data.seq_len || begin >= end)
        throw std::invalid_argument("build_targets: bad window");
    if (mode == TrainMode::supervised && !data.has_ground_truth)
        throw std::invalid_argument("build_targets: supervised mode needs ground truth");
    if (mode == TrainMode::unsupervised &&
        schedule.size() != static_cast<std::size_t>(data.seq_len))
        throw std::invalid_argument("build_targets: schedule length mismatch");

    const int h = data.grid_h, w = data.grid_w;
    TargetPlan plan;
    plan.reserve(end - begin);
    for (int t = begin; t < end; ++t) {
        StepPlan step;
        step.input = Tensor(h, w, 2);
        step.target = Tensor(h, w, 1);
        step.mask = Tensor(h, w, 1);
        const std::uint8_t* vis = data.v(seq, t);
        const std::uint8_t* occ = data.r(seq, t);
        step.dropped = mode == TrainMode::unsupervised && schedule[t];

        if (!step.dropped) {
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    step.input(i, j, 0) = vis[i * w + j];
                    step.input(i, j, 1) = occ[i * w + j];
                }
            }
        }
        if (mode == TrainMode::supervised) {
            const std::uint8_t* truth = data.y(seq, t);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) step.target(i, j, 0) = truth[i * w + j];
            step.mask.fill(1.0);
            step.has_loss = true;
        } else if (step.dropped) {
            // Graded on what the sensor would have seen this step.
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    step.target(i, j, 0) = occ[i * w + j];
                    step.mask(i, j, 0) = vis[i * w + j];
                    if (vis[i * w + j]) step.has_loss = true;
                }
            }
        }
        plan.push_back(std::move(step));
    }
    return plan;
}

namespace {

void accumulate(std::vector<double>& into, const std::vector<double>& from) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

}  // namespace

BpttResult bptt_gradients(const TrackerParams& params, const TargetPlan& plan,
                          const Tensor* carried_belief, bool sum_loss) {
    if (plan.empty()) throw std::invalid_argument("bptt_gradients: empty plan");
    const TrackerArch& arch = params.arch;
    const int T = static_cast<int>(plan.size());
    const int ce = arch.embedding_channels, cb = arch.belief_channels;

    // Forward, caching every activation. Decoding (and the loss) only happens
    // on steps that carry a mask.
    std::vector<StepCache> steps(plan.size());
    std::vector<BceResult> bce(plan.size());
    Tensor belief = carried_belief ? *carried_belief : params.initial_belief();
    double loss = 0.0;
    for (int t = 0; t < T; ++t) {
        belief = step_belief(params, belief, plan[t].input, &steps[t]);
        if (!plan[t].has_loss) continue;
        steps[t].prob = decode(params, belief);
        bce[t] = masked_bce(steps[t].prob, plan[t].target, plan[t].mask, !sum_loss);
        if (!std::isfinite(bce[t].loss))
            throw std::runtime_error("bptt_gradients: non-finite loss at window step " +
                                     std::to_string(t));
        loss += bce[t].loss;
    }
    const double step_scale = sum_loss ? 1.0 : 1.0 / T;
    loss *= step_scale;

    BpttResult result;
    result.grads = make_zero_grads(params);
    result.final_belief = belief;
    TrackerGrads& g = result.grads;

    // Reverse pass: grad_belief carries dL/dB_t backwards along the chain.
    Tensor grad_belief(arch.grid_h, arch.grid_w, cb);
    bool live = false;  // becomes true at the last loss-carrying step
    for (int t = T - 1; t >= 0; --t) {
        const StepCache& cache = steps[t];
        if (plan[t].has_loss) {
            Tensor grad_p = std::move(bce[t].grad_p);
            if (step_scale != 1.0)
                for (double& v : grad_p.flat()) v *= step_scale;
            const Tensor grad_dec_z = sigmoid_backward(cache.prob, grad_p);
            ConvGrads dec = conv2d_same_backward(cache.belief, params.decoder, grad_dec_z, true);
            accumulate(g.decoder_kernel, dec.grad_kernel);
            accumulate(g.decoder_bias, dec.grad_bias);
            for (std::size_t i = 0; i < grad_belief.size(); ++i)
                grad_belief.flat()[i] += dec.grad_input.flat()[i];
            live = true;
        }
        if (!live) continue;  // nothing downstream of this step carries loss

        const Tensor grad_bel_z = sigmoid_backward(cache.belief, grad_belief);
        ConvGrads bel = conv2d_same_backward(cache.belief_in, params.belief, grad_bel_z, true);
        accumulate(g.belief_kernel, bel.grad_kernel);
        accumulate(g.belief_bias, bel.grad_bias);

        // Split d(belief_in): embedding channels feed the encoder backward,
        // belief channels become dL/dB_{t-1}.
        Tensor grad_embedding(arch.grid_h, arch.grid_w, ce);
        for (int i = 0; i < arch.grid_h; ++i) {
            for (int j = 0; j < arch.grid_w; ++j) {
                const double* src = bel.grad_input.px(i, j);
                double* ge = grad_embedding.px(i, j);
                double* gb = grad_belief.px(i, j);
                for (int k = 0; k < ce; ++k) ge[k] = src[k];
                for (int k = 0; k < cb; ++k) gb[k] = src[ce + k];
            }
        }
        const Tensor grad_enc_z = sigmoid_backward(cache.embedding, grad_embedding);
        ConvGrads enc = conv2d_same_backward(cache.input, params.encoder, grad_enc_z, false);
        accumulate(g.encoder_kernel, enc.grad_kernel);
        accumulate(g.encoder_bias, enc.grad_bias);
    }

    // dL/dB_0 lands in b0 only when this window actually started the chain.
    if (!carried_belief && live) {
        if (arch.per_cell_b0) {
            for (std::size_t i = 0; i < g.b0.size(); ++i) g.b0[i] = grad_belief.flat()[i];
        } else {
            for (int i = 0; i < arch.grid_h; ++i)
                for (int j = 0; j < arch.grid_w; ++j) {
                    const double* gb = grad_belief.px(i, j);
                    for (int k = 0; k < cb; ++k) g.b0[k] += gb[k];
                }
        }
    }
    result.loss = loss;
    return result;
}

namespace {

// All-or-nothing update: every gradient span is checked finite before any
// parameter moves, so an abort never leaves a half-applied step behind.
void apply_update(TrackerParams& params, TrackerGrads& grads, double lr) {
    auto pv = param_views(params);
    auto gv = grad_views(grads);
    for (std::size_t i = 0; i < gv.size(); ++i)
        for (double v : gv[i].values)
            if (!std::isfinite(v))
                throw std::runtime_error("train: non-finite gradient in " + gv[i].name);
    for (std::size_t i = 0; i < pv.size(); ++i)
        sgd_step(pv[i].values, gv[i].values, lr, pv[i].name);
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config, const TrackerParams& initial) {
    config.validate();
    data.validate();
    if (data.n_sequences < 1 || data.seq_len < 2)
        throw std::invalid_argument("train: need at least one sequence of length >= 2");
    if (config.mode == TrainMode::supervised && !data.has_ground_truth)
        throw std::invalid_argument("train: supervised mode needs ground truth in the dataset");
    if (initial.arch.grid_h != data.grid_h || initial.arch.grid_w != data.grid_w)
        throw std::invalid_argument("train: parameter grid size disagrees with dataset");

    TrainResult result;
    result.params = initial;
    result.loss_curve.reserve(config.iterations);

    Pcg32 rng(derive_seed(config.seed, 3, 0));
    const int win =
        config.full_sequence ? data.seq_len : std::min(config.bptt_len, data.seq_len);
    std::vector<std::uint8_t> schedule;  // window dropout flags at absolute steps

    for (int iter = 0; iter < config.iterations; ++iter) {
        const int seq = static_cast<int>(rng.next_below(data.n_sequences));
        const int begin =
            win < data.seq_len ? static_cast<int>(rng.next_below(data.seq_len - win + 1)) : 0;
        const int end = begin + win;
        if (config.mode == TrainMode::unsupervised) {
            const auto flags = build_dropout_schedule(win, config.dropout_len,
                                                      config.dropout_duty, rng.next_u64());
            schedule.assign(static_cast<std::size_t>(data.seq_len), 0);
            std::copy(flags.begin(), flags.end(), schedule.begin() + begin);
        }
        const TargetPlan plan = build_targets(data, seq, begin, end, schedule, config.mode);

        BpttResult step;
        try {
            step = bptt_gradients(result.params, plan, nullptr, config.sum_loss);
            apply_update(result.params, step.grads, config.lr);
        } catch (const std::exception& e) {
            std::string msg = std::string("train: aborted at iteration ") +
                              std::to_string(iter + 1) + ": " + e.what();
            if (!config.checkpoint_prefix.empty()) {
                const std::string path = config.checkpoint_prefix + "_diverged.dtpk";
                save_tracker(path, result.params);
                msg += "; last finite parameters saved to " + path;
            }
            throw std::runtime_error(msg);
        }
        result.loss_curve.push_back(step.loss);

        if (config.checkpoint_interval > 0 && (iter + 1) % config.checkpoint_interval == 0 &&
            !config.checkpoint_prefix.empty())
            save_tracker(config.checkpoint_prefix + "_" + std::to_string(iter + 1) + ".dtpk",
                         result.params);
    }
    return result;
}

TrainResult train(const Dataset& data, const TrainConfig& config) {
    config.validate();
    TrackerArch arch;
    arch.grid_h = data.grid_h;
    arch.grid_w = data.grid_w;
    return train(data, config,
                 init_params(arch, config.seed, config.init_scale, config.recurrent_gain));
}

void write_loss_csv(const std::string& path, const std::vector<double>& curve) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "iteration,loss\n";
    char buf[40];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", curve[i]);
        out << (i + 1) << ',' << buf << '\n';
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace dt
