#include "dt/pipeline.hpp"

#include <atomic>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "dt/rng.hpp"

namespace dt {

SimSequence simulate_sequence(const WorldConfig& config, const SensorConfig& sensor, int seq_len) {
    if (seq_len < 1) throw std::invalid_argument("simulate_sequence: seq_len must be >= 1");
    SimSequence seq;
    seq.states.reserve(seq_len);
    seq.observations.reserve(seq_len);
    seq.states.push_back(init_world(config));
    for (int t = 0; t < seq_len; ++t) {
        const OccupancyGrid grid = rasterize(seq.states.back(), config);
        seq.observations.push_back(sense(grid, config.robot_pos, sensor, t));
        if (t + 1 < seq_len) seq.states.push_back(step_world(seq.states.back(), config));
    }
    return seq;
}

Dataset generate_dataset(const WorldConfig& world_template, const SensorConfig& sensor_template,
                         int n_sequences, int seq_len, std::uint64_t master_seed,
                         bool ground_truth, int threads) {
    if (n_sequences < 0) throw std::invalid_argument("generate_dataset: bad sequence count");
    if (threads < 1) threads = 1;
    Dataset data;
    data.grid_h = world_template.grid_h;
    data.grid_w = world_template.grid_w;
    data.seq_len = seq_len;
    data.n_sequences = n_sequences;
    data.has_ground_truth = ground_truth;
    data.bytes.resize(data.expected_bytes());

    const auto fill_sequence = [&](int s) {
        WorldConfig world = world_template;
        world.seed = derive_seed(master_seed, 0, s);
        SensorConfig sensor = sensor_template;
        sensor.seed = derive_seed(master_seed, 1, s);
        const SimSequence seq = simulate_sequence(world, sensor, seq_len);
        for (int t = 0; t < seq_len; ++t) {
            const Observation& obs = seq.observations[t];
            if (ground_truth) {
                const OccupancyGrid truth = rasterize(seq.states[t], world);
                std::memcpy(data.frame_channel(s, t, 0), truth.cells.data(), data.cells());
            }
            const int base = ground_truth ? 1 : 0;
            std::memcpy(data.frame_channel(s, t, base), obs.visible.cells.data(), data.cells());
            std::memcpy(data.frame_channel(s, t, base + 1), obs.occupied.cells.data(),
                        data.cells());
        }
    };

    if (threads == 1 || n_sequences <= 1) {
        for (int s = 0; s < n_sequences; ++s) fill_sequence(s);
        return data;
    }

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        try {
            for (int s = next.fetch_add(1); s < n_sequences; s = next.fetch_add(1))
                fill_sequence(s);
        } catch (...) {
            const std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    const int n_workers = std::min(threads, n_sequences);
    pool.reserve(n_workers);
    for (int k = 0; k < n_workers; ++k) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return data;
}

}  // namespace dt
