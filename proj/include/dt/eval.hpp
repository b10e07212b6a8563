#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dt/dataset.hpp"
#include "dt/pipeline.hpp"
#include "dt/tracker.hpp"

namespace dt {

// Pooled metrics over one cell population (visible or occluded cells).
struct MetricSet {
    double masked_bce_visible = 0.0;
    double masked_bce_occluded = 0.0;
    double f1_at_half = 1.0;  // F1 on occluded cells at threshold 0.5
};

struct FrameMetrics {
    int sequence = 0;
    int step = 0;
    double masked_bce_visible = 0.0;
    double masked_bce_occluded = 0.0;
    double f1_at_half = 1.0;
};

struct EvalReport {
    MetricSet model;
    MetricSet copy_last;
    MetricSet constant_prior;
    double mean_occupancy = 0.0;  // the constant prior's prediction
    std::vector<FrameMetrics> per_frame;
};

// Online filtering: p_t for every step, where p_t depends only on the
// observations up to t.
std::vector<Tensor> filter_stream(const TrackerParams& params,
                                  const std::vector<Observation>& observations);
std::vector<Tensor> filter_stream(const TrackerParams& params, const std::vector<Tensor>& inputs);

// Future prediction: filters the given observations, then continues the
// belief chain with n empty observations, decoding each. n = 0 gives an
// empty list.
std::vector<Tensor> predict_future(const TrackerParams& params,
                                   const std::vector<Observation>& observations, int n);

// Filters every sequence of a ground-truth dataset and pools BCE and F1 over
// visible (v=1) and occluded (v=0) cells, with two reference predictors
// evaluated on identical cells: copy_last repeats each cell's most recently
// visible reading (0.5 before the first sighting) and constant_prior always
// predicts the dataset-wide mean occupancy.
EvalReport evaluate(const TrackerParams& params, const Dataset& data);

// The observation-dropout protocol on recorded data: per sequence a dropout
// schedule is drawn from `seed`, the model runs with dropped steps replaced
// by empty observations, and predictions are graded at dropped steps on the
// cells the sensor would have seen (mask v, target r). Baselines see the
// same degraded stream; constant_prior predicts the mean of r over exactly
// the graded cells.
struct DroppedEval {
    double model_bce = 0.0;
    double copy_last_bce = 0.0;
    double constant_prior_bce = 0.0;
    std::size_t graded_cells = 0;
};
DroppedEval evaluate_dropped(const TrackerParams& params, const Dataset& data, int dropout_len,
                             double duty, std::uint64_t seed);

// Full-occlusion episodes of a simulated sequence: maximal frame runs where
// an object has in-grid cells but none visible, bracketed by frames where it
// is at least partly visible (runs cut short by despawn or sequence ends are
// discarded). mean_prob averages the decoded probability over the object's
// true cells across the episode.
struct OcclusionEvent {
    std::uint64_t object_id = 0;
    int begin = 0, end = 0;  // inclusive frame range
    double mean_prob = 0.0;
    std::size_t cell_count = 0;
};
std::vector<OcclusionEvent> find_occlusion_events(const SimSequence& seq,
                                                  const WorldConfig& config,
                                                  const std::vector<Tensor>& probs, int max_len);

// One frame as grayscale panels [observation | prediction | truth], 1-pixel
// separators between panels; truth is omitted when null. Observation panel:
// hidden 0, visible-empty 128, visible-occupied 255. Probability panel maps
// p linearly to 0..255.
Image render_frame(const Observation& obs, const Tensor& p, const ByteGrid* truth);

std::string report_to_json(const EvalReport& report);

}  // namespace dt
