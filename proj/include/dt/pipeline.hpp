#pragma once

#include <cstdint>
#include <vector>

#include "dt/dataset.hpp"
#include "dt/sensor.hpp"
#include "dt/world.hpp"

namespace dt {

// One simulated sequence with full state kept around: states[t] is the world
// at step t and observations[t] the sensor frame taken in it.
struct SimSequence {
    std::vector<WorldState> states;
    std::vector<Observation> observations;
};

// Runs the simulator for seq_len steps from config.seed and senses every
// frame (sensor noise stream = frame index).
SimSequence simulate_sequence(const WorldConfig& config, const SensorConfig& sensor, int seq_len);

// Batch generation: sequence s runs with world seed derive_seed(master, 0, s)
// and sensor seed derive_seed(master, 1, s); the seed fields inside the two
// config templates are ignored. Ground truth is included when requested.
// Sequences are independent, so they can be filled by up to `threads`
// workers; each writes its own slice of the buffer and the result is
// identical for any worker count.
Dataset generate_dataset(const WorldConfig& world_template, const SensorConfig& sensor_template,
                         int n_sequences, int seq_len, std::uint64_t master_seed,
                         bool ground_truth, int threads = 1);

}  // namespace dt
