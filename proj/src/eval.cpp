#include "dt/eval.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "dt/rng.hpp"
#include "dt/trainer.hpp"

namespace dt {

namespace {

double clamp_p(double p) { return std::min(1.0 - kBceClamp, std::max(kBceClamp, p)); }

double cell_bce(double p, double y) {
    p = clamp_p(p);
    return -(y > 0.5 ? std::log(p) : std::log1p(-p));
}

// Pooled binary-classification tallies; F1 of an empty or all-negative
// population is defined as 1 (nothing to find, nothing found).
struct F1Tally {
    std::size_t tp = 0, fp = 0, fn = 0;
    void add(bool predicted, bool actual) {
        if (predicted && actual) ++tp;
        else if (predicted) ++fp;
        else if (actual) ++fn;
    }
    double f1() const {
        const std::size_t denom = 2 * tp + fp + fn;
        return denom == 0 ? 1.0 : 2.0 * double(tp) / double(denom);
    }
};

struct BceTally {
    double sum = 0.0;
    std::size_t count = 0;
    void add(double p, double y) {
        sum += cell_bce(p, y);
        ++count;
    }
    double mean() const { return count == 0 ? 0.0 : sum / double(count); }
};

struct MetricTally {
    BceTally visible, occluded;
    F1Tally f1;
    MetricSet finish() const {
        return {visible.mean(), occluded.mean(), f1.f1()};
    }
};

Tensor empty_input(int h, int w) { return Tensor(h, w, 2); }

}  // namespace

std::vector<Tensor> filter_stream(const TrackerParams& params, const std::vector<Tensor>& inputs) {
    std::vector<Tensor> probs;
    probs.reserve(inputs.size());
    Tensor belief = params.initial_belief();
    for (const Tensor& input : inputs) {
        belief = step_belief(params, belief, input);
        probs.push_back(decode(params, belief));
    }
    return probs;
}

std::vector<Tensor> filter_stream(const TrackerParams& params,
                                  const std::vector<Observation>& observations) {
    std::vector<Tensor> inputs;
    inputs.reserve(observations.size());
    for (const auto& obs : observations) inputs.push_back(observation_to_input(obs));
    return filter_stream(params, inputs);
}

std::vector<Tensor> predict_future(const TrackerParams& params,
                                   const std::vector<Observation>& observations, int n) {
    if (n < 0) throw std::invalid_argument("predict_future: n must be >= 0");
    Tensor belief = params.initial_belief();
    for (const auto& obs : observations)
        belief = step_belief(params, belief, observation_to_input(obs));
    std::vector<Tensor> probs;
    probs.reserve(n);
    const Tensor empty = empty_input(params.arch.grid_h, params.arch.grid_w);
    for (int k = 0; k < n; ++k) {
        belief = step_belief(params, belief, empty);
        probs.push_back(decode(params, belief));
    }
    return probs;
}

EvalReport evaluate(const TrackerParams& params, const Dataset& data) {
    data.validate();
    if (!data.has_ground_truth)
        throw std::invalid_argument("evaluate: dataset has no ground truth");
    if (params.arch.grid_h != data.grid_h || params.arch.grid_w != data.grid_w)
        throw std::invalid_argument("evaluate: grid size mismatch");

    const int h = data.grid_h, w = data.grid_w;
    const std::size_t cells = data.cells();

    double occupancy_sum = 0.0;
    for (int s = 0; s < data.n_sequences; ++s)
        for (int t = 0; t < data.seq_len; ++t) {
            const std::uint8_t* y = data.y(s, t);
            for (std::size_t i = 0; i < cells; ++i) occupancy_sum += y[i];
        }
    const double prior =
        occupancy_sum / (double(data.n_sequences) * double(data.seq_len) * double(cells));

    EvalReport report;
    report.mean_occupancy = prior;
    MetricTally model, copy_last, constant;

    for (int s = 0; s < data.n_sequences; ++s) {
        Tensor belief = params.initial_belief();
        std::vector<double> memory(cells, 0.5);  // copy_last per-cell state
        for (int t = 0; t < data.seq_len; ++t) {
            const std::uint8_t* y = data.y(s, t);
            const std::uint8_t* vis = data.v(s, t);
            const std::uint8_t* occ = data.r(s, t);

            Tensor input(h, w, 2);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    input(i, j, 0) = vis[i * w + j];
                    input(i, j, 1) = occ[i * w + j];
                }
            belief = step_belief(params, belief, input);
            const Tensor p = decode(params, belief);

            for (std::size_t i = 0; i < cells; ++i)
                if (vis[i]) memory[i] = occ[i];

            MetricTally frame;
            for (std::size_t i = 0; i < cells; ++i) {
                const double truth = y[i];
                const double pm = p.flat()[i];
                if (vis[i]) {
                    model.visible.add(pm, truth);
                    copy_last.visible.add(memory[i], truth);
                    constant.visible.add(prior, truth);
                    frame.visible.add(pm, truth);
                } else {
                    model.occluded.add(pm, truth);
                    copy_last.occluded.add(memory[i], truth);
                    constant.occluded.add(prior, truth);
                    frame.occluded.add(pm, truth);
                    model.f1.add(pm >= 0.5, truth > 0.5);
                    copy_last.f1.add(memory[i] >= 0.5, truth > 0.5);
                    constant.f1.add(prior >= 0.5, truth > 0.5);
                    frame.f1.add(pm >= 0.5, truth > 0.5);
                }
            }
            const MetricSet fm = frame.finish();
            report.per_frame.push_back({s, t, fm.masked_bce_visible, fm.masked_bce_occluded,
                                        fm.f1_at_half});
        }
    }
    report.model = model.finish();
    report.copy_last = copy_last.finish();
    report.constant_prior = constant.finish();
    return report;
}

DroppedEval evaluate_dropped(const TrackerParams& params, const Dataset& data, int dropout_len,
                             double duty, std::uint64_t seed) {
    data.validate();
    if (params.arch.grid_h != data.grid_h || params.arch.grid_w != data.grid_w)
        throw std::invalid_argument("evaluate_dropped: grid size mismatch");

    const int h = data.grid_h, w = data.grid_w;
    const std::size_t cells = data.cells();

    DroppedEval out;
    double model_sum = 0.0, copy_sum = 0.0;
    std::size_t positives = 0;

    for (int s = 0; s < data.n_sequences; ++s) {
        const std::vector<std::uint8_t> schedule =
            build_dropout_schedule(data.seq_len, dropout_len, duty, derive_seed(seed, 4, s));
        Tensor belief = params.initial_belief();
        std::vector<double> memory(cells, 0.5);
        for (int t = 0; t < data.seq_len; ++t) {
            const std::uint8_t* vis = data.v(s, t);
            const std::uint8_t* occ = data.r(s, t);
            const bool dropped = schedule[t];

            Tensor input(h, w, 2);
            if (!dropped) {
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                        input(i, j, 0) = vis[i * w + j];
                        input(i, j, 1) = occ[i * w + j];
                    }
                for (std::size_t i = 0; i < cells; ++i)
                    if (vis[i]) memory[i] = occ[i];
            }
            belief = step_belief(params, belief, input);
            if (!dropped) continue;

            const Tensor p = decode(params, belief);
            for (std::size_t i = 0; i < cells; ++i) {
                if (!vis[i]) continue;
                model_sum += cell_bce(p.flat()[i], occ[i]);
                copy_sum += cell_bce(memory[i], occ[i]);
                positives += occ[i];
                ++out.graded_cells;
            }
        }
    }
    if (out.graded_cells > 0) {
        const double n = double(out.graded_cells);
        out.model_bce = model_sum / n;
        out.copy_last_bce = copy_sum / n;
        const double q = clamp_p(double(positives) / n);
        out.constant_prior_bce =
            -(double(positives) * std::log(q) + (n - double(positives)) * std::log1p(-q)) / n;
    }
    return out;
}

std::vector<OcclusionEvent> find_occlusion_events(const SimSequence& seq,
                                                  const WorldConfig& config,
                                                  const std::vector<Tensor>& probs, int max_len) {
    const int T = static_cast<int>(seq.states.size());
    if (static_cast<int>(probs.size()) != T || static_cast<int>(seq.observations.size()) != T)
        throw std::invalid_argument("find_occlusion_events: sequence/probs length mismatch");

    enum : std::uint8_t { absent, hidden, seen };
    std::map<std::uint64_t, std::vector<std::uint8_t>> timeline;
    std::map<std::uint64_t, std::vector<std::vector<int>>> cells_at;
    for (int t = 0; t < T; ++t) {
        const ByteGrid& vis = seq.observations[t].visible;
        for (const WorldObject& obj : seq.states[t].objects) {
            auto it = timeline.try_emplace(obj.id, T, absent).first;
            auto ct = cells_at.try_emplace(obj.id, T).first;
            std::vector<int> cells = object_cells(obj, config.grid_h, config.grid_w);
            if (cells.empty()) continue;  // fully outside the grid
            bool any_visible = false;
            for (int c : cells)
                if (vis.cells[c]) {
                    any_visible = true;
                    break;
                }
            it->second[t] = any_visible ? seen : hidden;
            ct->second[t] = std::move(cells);
        }
    }

    std::vector<OcclusionEvent> events;
    for (const auto& [id, states] : timeline) {
        for (int t = 0; t < T;) {
            if (states[t] != hidden) {
                ++t;
                continue;
            }
            int end = t;
            while (end + 1 < T && states[end + 1] == hidden) ++end;
            const bool bracketed = t > 0 && states[t - 1] == seen && end + 1 < T &&
                                   states[end + 1] == seen;
            if (bracketed && end - t + 1 <= max_len) {
                OcclusionEvent ev;
                ev.object_id = id;
                ev.begin = t;
                ev.end = end;
                double sum = 0.0;
                for (int u = t; u <= end; ++u)
                    for (int c : cells_at.at(id)[u]) {
                        sum += probs[u].flat()[c];
                        ++ev.cell_count;
                    }
                ev.mean_prob = ev.cell_count ? sum / double(ev.cell_count) : 0.0;
                events.push_back(ev);
            }
            t = end + 1;
        }
    }
    return events;
}

Image render_frame(const Observation& obs, const Tensor& p, const ByteGrid* truth) {
    const int h = obs.visible.h, w = obs.visible.w;
    if (p.h() != h || p.w() != w || p.c() != 1)
        throw std::invalid_argument("render_frame: probability grid shape mismatch");
    if (truth && (truth->h != h || truth->w != w))
        throw std::invalid_argument("render_frame: truth shape mismatch");

    const int panels = truth ? 3 : 2;
    Image img(h, panels * w + panels - 1);
    const auto put_panel = [&](int panel, auto&& pixel) {
        const int x0 = panel * (w + 1);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) img.at(i, x0 + j) = pixel(i, j);
    };
    put_panel(0, [&](int i, int j) -> std::uint8_t {
        if (!obs.visible.at(i, j)) return 0;
        return obs.occupied.at(i, j) ? 255 : 128;
    });
    put_panel(1, [&](int i, int j) -> std::uint8_t {
        const double v = std::min(1.0, std::max(0.0, p(i, j, 0)));
        return static_cast<std::uint8_t>(std::llround(v * 255.0));
    });
    if (truth)
        put_panel(2, [&](int i, int j) -> std::uint8_t { return truth->at(i, j) ? 255 : 0; });
    for (int sep = 1; sep < panels; ++sep) {
        const int x = sep * (w + 1) - 1;
        for (int i = 0; i < h; ++i) img.at(i, x) = 128;
    }
    return img;
}

std::string report_to_json(const EvalReport& report) {
    const auto metric_json = [](const MetricSet& m) {
        nlohmann::ordered_json j;
        j["masked_bce_visible"] = m.masked_bce_visible;
        j["masked_bce_occluded"] = m.masked_bce_occluded;
        j["f1_at_half"] = m.f1_at_half;
        return j;
    };
    nlohmann::ordered_json j = metric_json(report.model);
    j["baselines"]["copy_last"] = metric_json(report.copy_last);
    j["baselines"]["constant_prior"] = metric_json(report.constant_prior);
    j["mean_occupancy"] = report.mean_occupancy;
    j["per_frame"] = nlohmann::ordered_json::array();
    for (const FrameMetrics& f : report.per_frame) {
        nlohmann::ordered_json e;
        e["sequence"] = f.sequence;
        e["step"] = f.step;
        e["masked_bce_visible"] = f.masked_bce_visible;
        e["masked_bce_occluded"] = f.masked_bce_occluded;
        e["f1_at_half"] = f.f1_at_half;
        j["per_frame"].push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

}  // namespace dt
