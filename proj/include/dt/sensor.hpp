#pragma once

#include <cstdint>

#include "dt/tensor.hpp"
#include "dt/world.hpp"

namespace dt {

// A single sensor frame over the grid.
//
//   visible:  1 where the cell was scanned this frame, 0 where no ray reached it
//   occupied: 1 where a scanned cell reported an object, 0 otherwise
//
// occupied is only meaningful where visible is 1; unscanned cells are always 0.
struct Observation {
    ByteGrid visible;
    ByteGrid occupied;

    Observation() = default;
    Observation(int h, int w) : visible(h, w), occupied(h, w) {}
};

struct SensorConfig {
    // Per-cell probability of flipping the occupancy reading of a visible
    // cell. 0 disables noise entirely (no RNG draws are consumed).
    double noise_rate = 0.0;
    // Seed for the noise stream; the per-frame stream is derived from this
    // together with the frame index, so frames are independent and a sequence
    // can be re-rendered from any starting point.
    std::uint64_t seed = 0;
};

// Computes line-of-sight visibility from the robot to every cell center.
//
// A cell is visible when the segment from robot_pos to the cell's center is
// not interrupted by an occupied cell other than the target itself. A ray is
// considered interrupted at the first sampling point (taken every 0.05 cells
// of arc length from the robot outward) that rounds to an occupied, non-target
// cell. Occupied cells are therefore visible exactly on their front silhouette
// as seen from the robot; everything in their shadow is not.
ByteGrid raycast_visibility(const OccupancyGrid& occupancy, Vec2 robot_pos);

// Builds the observation for one frame: visibility mask from raycasting, then
// the occupancy readings on visible cells, with optional per-cell flip noise.
// frame_index selects the per-frame noise stream (see SensorConfig::seed).
Observation sense(const OccupancyGrid& occupancy, Vec2 robot_pos, const SensorConfig& config,
                  std::uint64_t frame_index);

// Packs an observation into the 2-channel network input layout
// (H, W, 2): channel 0 = visible, channel 1 = occupied.
Tensor observation_to_input(const Observation& obs);

}  // namespace dt
