#include "dt/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dt/checkpoint.hpp"
#include "dt/rng.hpp"

namespace dt {

int TrackerArch::conv_weight_count() const {
    const int enc = encoder_kernel * encoder_kernel * input_channels * embedding_channels +
                    embedding_channels;
    const int bel = belief_kernel * belief_kernel * (embedding_channels + belief_channels) *
                        belief_channels +
                    belief_channels;
    const int dec = decoder_kernel * decoder_kernel * belief_channels * 1 + 1;
    return enc + bel + dec;
}

bool TrackerArch::is_reference_arch() const {
    return grid_h == 50 && grid_w == 50 && input_channels == 2 && embedding_channels == 8 &&
           belief_channels == 16 && encoder_kernel == 7 && belief_kernel == 5 &&
           decoder_kernel == 7;
}

void TrackerArch::validate() const {
    if (grid_h < 1 || grid_w < 1) throw std::logic_error("tracker: grid dims must be positive");
    if (input_channels < 1 || embedding_channels < 1 || belief_channels < 1)
        throw std::logic_error("tracker: channel counts must be positive");
    if (encoder_kernel % 2 == 0 || belief_kernel % 2 == 0 || decoder_kernel % 2 == 0)
        throw std::logic_error("tracker: kernel sizes must be odd");
    // The reference network's budget is a hard invariant, checked wherever a
    // network is constructed.
    if (is_reference_arch() && conv_weight_count() != 11193)
        throw std::logic_error("tracker: reference architecture weight count drifted");
}

Tensor TrackerParams::initial_belief() const {
    const int c = arch.belief_channels;
    if (arch.per_cell_b0) return b0;
    Tensor out(arch.grid_h, arch.grid_w, c);
    for (int i = 0; i < arch.grid_h; ++i)
        for (int j = 0; j < arch.grid_w; ++j)
            for (int k = 0; k < c; ++k) out(i, j, k) = b0(0, 0, k);
    return out;
}

TrackerGrads make_zero_grads(const TrackerParams& params) {
    TrackerGrads g;
    g.encoder_kernel.assign(params.encoder.kernel.size(), 0.0);
    g.encoder_bias.assign(params.encoder.bias.size(), 0.0);
    g.belief_kernel.assign(params.belief.kernel.size(), 0.0);
    g.belief_bias.assign(params.belief.bias.size(), 0.0);
    g.decoder_kernel.assign(params.decoder.kernel.size(), 0.0);
    g.decoder_bias.assign(params.decoder.bias.size(), 0.0);
    g.b0.assign(params.b0.size(), 0.0);
    return g;
}

std::vector<ParamView> param_views(TrackerParams& p) {
    return {
        {"encoder.kernel", p.encoder.kernel}, {"encoder.bias", p.encoder.bias},
        {"belief.kernel", p.belief.kernel},   {"belief.bias", p.belief.bias},
        {"decoder.kernel", p.decoder.kernel}, {"decoder.bias", p.decoder.bias},
        {"b0_seed", p.b0.flat()},
    };
}

std::vector<ParamView> grad_views(TrackerGrads& g) {
    return {
        {"encoder.kernel", g.encoder_kernel}, {"encoder.bias", g.encoder_bias},
        {"belief.kernel", g.belief_kernel},   {"belief.bias", g.belief_bias},
        {"decoder.kernel", g.decoder_kernel}, {"decoder.bias", g.decoder_bias},
        {"b0_seed", g.b0},
    };
}

TrackerParams init_params(const TrackerArch& arch, std::uint64_t seed, double init_scale,
                          double recurrent_gain) {
    arch.validate();
    if (!(init_scale >= 0.0)) throw std::invalid_argument("init_params: init_scale must be >= 0");
    if (!(recurrent_gain >= 0.0))
        throw std::invalid_argument("init_params: recurrent_gain must be >= 0");

    TrackerParams p;
    p.arch = arch;
    p.encoder = ConvLayer(arch.encoder_kernel, arch.encoder_kernel, arch.input_channels,
                          arch.embedding_channels);
    p.belief = ConvLayer(arch.belief_kernel, arch.belief_kernel,
                         arch.embedding_channels + arch.belief_channels, arch.belief_channels);
    p.decoder = ConvLayer(arch.decoder_kernel, arch.decoder_kernel, arch.belief_channels, 1);
    p.b0 = arch.per_cell_b0 ? Tensor(arch.grid_h, arch.grid_w, arch.belief_channels)
                            : Tensor(1, 1, arch.belief_channels);

    Pcg32 rng(derive_seed(seed, 2, 0));
    for (ConvLayer* layer : {&p.encoder, &p.belief, &p.decoder}) {
        const double s = init_scale / std::sqrt(double(layer->kh) * layer->kw * layer->cin);
        for (double& w : layer->kernel) w = rng.uniform(-s, s);
        // biases stay zero
    }
    // b0 stays zero: the pre-training initial belief is "no information".

    if (recurrent_gain > 0.0) {
        // Identity-style recurrent init: bias each belief channel's center tap
        // onto its own previous value so the channel starts as a unit-gain
        // memory cell (see the header comment).
        const int k = arch.belief_kernel;
        const int cin = arch.embedding_channels + arch.belief_channels;
        const int center = (k / 2) * k + (k / 2);
        for (int c = 0; c < arch.belief_channels; ++c) {
            p.belief.kernel[std::size_t((center * cin + arch.embedding_channels + c) *
                                        arch.belief_channels + c)] += recurrent_gain;
            p.belief.bias[std::size_t(c)] += -0.5 * recurrent_gain;
        }
    }
    return p;
}

namespace {

Tensor conv_sigmoid(const Tensor& in, const ConvLayer& layer) {
    return sigmoid_forward(conv2d_same_forward(in, layer));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor out(a.h(), a.w(), a.c() + b.c());
    for (int i = 0; i < a.h(); ++i) {
        for (int j = 0; j < a.w(); ++j) {
            double* dst = out.px(i, j);
            const double* pa = a.px(i, j);
            const double* pb = b.px(i, j);
            for (int k = 0; k < a.c(); ++k) dst[k] = pa[k];
            for (int k = 0; k < b.c(); ++k) dst[a.c() + k] = pb[k];
        }
    }
    return out;
}

}  // namespace

Tensor step_belief(const TrackerParams& params, const Tensor& prev_belief, const Tensor& input,
                   StepCache* cache) {
    const TrackerArch& a = params.arch;
    if (input.h() != a.grid_h || input.w() != a.grid_w || input.c() != a.input_channels)
        throw std::invalid_argument("step_belief: input shape mismatch");
    if (prev_belief.h() != a.grid_h || prev_belief.w() != a.grid_w ||
        prev_belief.c() != a.belief_channels)
        throw std::invalid_argument("step_belief: belief shape mismatch");

    Tensor embedding = conv_sigmoid(input, params.encoder);
    Tensor belief_in = concat_channels(embedding, prev_belief);
    Tensor belief = conv_sigmoid(belief_in, params.belief);
    if (cache) {
        cache->input = input;
        cache->embedding = std::move(embedding);
        cache->belief_in = std::move(belief_in);
        cache->belief = belief;
    }
    return belief;
}

Tensor step_belief(const TrackerParams& params, const Tensor& prev_belief, const Observation& obs) {
    return step_belief(params, prev_belief, observation_to_input(obs));
}

Tensor decode(const TrackerParams& params, const Tensor& belief) {
    const TrackerArch& a = params.arch;
    if (belief.h() != a.grid_h || belief.w() != a.grid_w || belief.c() != a.belief_channels)
        throw std::invalid_argument("decode: belief shape mismatch");
    return conv_sigmoid(belief, params.decoder);
}

std::vector<StepCache> forward_sequence(const TrackerParams& params,
                                        const std::vector<Tensor>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("forward_sequence: empty input list");
    std::vector<StepCache> steps(inputs.size());
    Tensor belief = params.initial_belief();
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        belief = step_belief(params, belief, inputs[t], &steps[t]);
        steps[t].prob = decode(params, belief);
    }
    return steps;
}

std::vector<StepCache> forward_sequence(const TrackerParams& params,
                                        const std::vector<Observation>& observations) {
    std::vector<Tensor> inputs;
    inputs.reserve(observations.size());
    for (const auto& obs : observations) inputs.push_back(observation_to_input(obs));
    return forward_sequence(params, inputs);
}

void save_tracker(const std::string& path, const TrackerParams& params) {
    auto views = param_views(const_cast<TrackerParams&>(params));
    std::vector<NamedParam> out;
    out.reserve(views.size());
    const auto u = [](int v) { return static_cast<std::uint32_t>(v); };
    const TrackerArch& a = params.arch;
    std::vector<std::vector<std::uint32_t>> dims = {
        {u(a.encoder_kernel), u(a.encoder_kernel), u(a.input_channels), u(a.embedding_channels)},
        {u(a.embedding_channels)},
        {u(a.belief_kernel), u(a.belief_kernel), u(a.embedding_channels + a.belief_channels),
         u(a.belief_channels)},
        {u(a.belief_channels)},
        {u(a.decoder_kernel), u(a.decoder_kernel), u(a.belief_channels), 1},
        {1},
        a.per_cell_b0 ? std::vector<std::uint32_t>{u(a.grid_h), u(a.grid_w), u(a.belief_channels)}
                      : std::vector<std::uint32_t>{u(a.belief_channels)},
    };
    for (std::size_t i = 0; i < views.size(); ++i) {
        NamedParam np;
        np.name = views[i].name;
        np.dims = dims[i];
        np.values.assign(views[i].values.begin(), views[i].values.end());
        out.push_back(std::move(np));
    }
    write_dtpk(path, out);
}

TrackerParams load_tracker(const std::string& path, int grid_h, int grid_w) {
    const std::vector<NamedParam> raw = read_dtpk(path);
    const auto find = [&](const std::string& name) -> const NamedParam& {
        for (const auto& np : raw)
            if (np.name == name) return np;
        throw std::runtime_error("checkpoint " + path + ": missing parameter \"" + name + "\"");
    };
    const NamedParam& ek = find("encoder.kernel");
    const NamedParam& bk = find("belief.kernel");
    const NamedParam& dk = find("decoder.kernel");
    const NamedParam& b0 = find("b0_seed");
    if (ek.dims.size() != 4 || bk.dims.size() != 4 || dk.dims.size() != 4)
        throw std::runtime_error("checkpoint " + path + ": kernel parameters must be rank 4");

    TrackerArch arch;
    arch.grid_h = grid_h;
    arch.grid_w = grid_w;
    arch.encoder_kernel = static_cast<int>(ek.dims[0]);
    arch.input_channels = static_cast<int>(ek.dims[2]);
    arch.embedding_channels = static_cast<int>(ek.dims[3]);
    arch.belief_kernel = static_cast<int>(bk.dims[0]);
    arch.belief_channels = static_cast<int>(bk.dims[3]);
    arch.decoder_kernel = static_cast<int>(dk.dims[0]);
    if (b0.dims.size() == 3) {
        arch.per_cell_b0 = true;
        arch.grid_h = static_cast<int>(b0.dims[0]);
        arch.grid_w = static_cast<int>(b0.dims[1]);
    } else if (b0.dims.size() != 1) {
        throw std::runtime_error("checkpoint " + path + ": b0_seed must be rank 1 or 3");
    }
    arch.validate();
    if (bk.dims[2] != static_cast<std::uint32_t>(arch.embedding_channels + arch.belief_channels))
        throw std::runtime_error("checkpoint " + path + ": belief kernel input channels disagree " +
                                 "with encoder output + belief width");

    TrackerParams p = init_params(arch, 0, 0.0);
    for (ParamView& view : param_views(p)) {
        const NamedParam& np = find(view.name);
        if (np.values.size() != view.values.size())
            throw std::runtime_error("checkpoint " + path + ": parameter \"" + view.name +
                                     "\" has " + std::to_string(np.values.size()) +
                                     " values, expected " + std::to_string(view.values.size()));
        std::copy(np.values.begin(), np.values.end(), view.values.begin());
    }
    return p;
}

}  // namespace dt
