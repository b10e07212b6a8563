#include "dt/sensor.hpp"

#include <cmath>

#include "dt/rng.hpp"

namespace dt {

namespace {

constexpr double kRayStep = 0.05;

// One ray: is the segment from robot_pos to the center of (ti, tj) clear?
//
// The sampling rule is part of the sensor's contract: positions are taken at
// arc lengths k * 0.05 for k = 0, 1, ... strictly below the segment length,
// each position is rounded per-coordinate to the nearest cell, and the ray is
// blocked at the first sample landing on an occupied cell other than the
// target. Keeping the arithmetic in exactly this form (length via hypot, then
// robot + (s / length) * delta per coordinate) makes the result reproducible
// across implementations of the same rule, including on the boundary-exact
// samples that axis-aligned rays produce.
bool ray_clear(const OccupancyGrid& occ, Vec2 robot, int ti, int tj) {
    const double dr = ti - robot.row;
    const double dc = tj - robot.col;
    const double len = std::hypot(dr, dc);
    for (long k = 0;; ++k) {
        const double s = k * kRayStep;
        if (!(s < len)) return true;
        const double t = s / len;
        const int i = static_cast<int>(std::llround(robot.row + t * dr));
        const int j = static_cast<int>(std::llround(robot.col + t * dc));
        if (i == ti && j == tj) continue;
        if (i < 0 || i >= occ.h || j < 0 || j >= occ.w) continue;
        if (occ.at(i, j)) return false;
    }
}

}  // namespace

ByteGrid raycast_visibility(const OccupancyGrid& occupancy, Vec2 robot_pos) {
    ByteGrid vis(occupancy.h, occupancy.w);
    for (int i = 0; i < occupancy.h; ++i)
        for (int j = 0; j < occupancy.w; ++j)
            if (ray_clear(occupancy, robot_pos, i, j)) vis.at(i, j) = 1;
    return vis;
}

Observation sense(const OccupancyGrid& occupancy, Vec2 robot_pos, const SensorConfig& config,
                  std::uint64_t frame_index) {
    Observation obs(occupancy.h, occupancy.w);
    obs.visible = raycast_visibility(occupancy, robot_pos);

    Pcg32 noise(config.seed, frame_index);
    const bool noisy = config.noise_rate > 0.0;
    for (int i = 0; i < occupancy.h; ++i) {
        for (int j = 0; j < occupancy.w; ++j) {
            if (!obs.visible.at(i, j)) continue;  // hidden cells read as 0, no noise draw
            std::uint8_t reading = occupancy.at(i, j);
            if (noisy && noise.next_double() < config.noise_rate) reading ^= 1;
            obs.occupied.at(i, j) = reading;
        }
    }
    return obs;
}

Tensor observation_to_input(const Observation& obs) {
    Tensor input(obs.visible.h, obs.visible.w, 2);
    for (int i = 0; i < obs.visible.h; ++i) {
        for (int j = 0; j < obs.visible.w; ++j) {
            input(i, j, 0) = obs.visible.at(i, j);
            input(i, j, 1) = obs.occupied.at(i, j);
        }
    }
    return input;
}

}  // namespace dt
