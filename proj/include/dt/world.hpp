#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dt/rng.hpp"
#include "dt/tensor.hpp"

namespace dt {

enum class Shape { circle, square };

// Continuous (row, col) point. Cell (i, j) of a grid has its center at the
// continuous point (i, j); cell boundaries sit on the half-integers.
struct Vec2 {
    double row = 0.0, col = 0.0;
};

struct WorldConfig {
    int grid_h = 50;
    int grid_w = 50;
    Vec2 robot_pos{47.5, 25.0};
    int min_objects = 2;
    int max_objects = 12;
    double radius_range[2] = {1.5, 3.0};
    double speed_range[2] = {0.2, 0.8};
    Shape shape = Shape::circle;
    double spawn_margin = 5.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument on bad ranges
};

struct WorldObject {
    Vec2 center;
    Vec2 velocity;  // cells per step
    double radius = 0.0;
    Shape shape = Shape::circle;
    std::uint64_t id = 0;  // stable across steps; used by evaluation tooling
};

struct WorldState {
    std::vector<WorldObject> objects;
    std::int64_t time = 0;
    Pcg32 rng;
    std::uint64_t next_id = 0;
};

using OccupancyGrid = ByteGrid;

// Draws object count uniformly in [min_objects, max_objects] and places
// objects by rejection sampling inside the grid; never overlapping each
// other or the robot. Throws if a placement cannot be found within the
// attempt budget (configuration infeasible).
WorldState init_world(const WorldConfig& config);

// Advances every object by its velocity. A move that would overlap another
// object or the robot is refused: the object keeps its position for this
// step and its velocity is reflected off the blocker (elastic bounce, speed
// preserved). Objects whose centers leave the grid by more than spawn_margin
// despawn; new objects spawn on the margin ring, keeping the count within
// [min_objects, max_objects].
WorldState step_world(const WorldState& state, const WorldConfig& config);

// Cell (i, j) is set iff its center lies inside any object: euclidean
// distance <= radius for circles, Chebyshev distance <= radius for squares.
OccupancyGrid rasterize(const WorldState& state, const WorldConfig& config);

// Cells covered by a single object, as flat row*W+col indices (in-grid only).
std::vector<int> object_cells(const WorldObject& obj, int grid_h, int grid_w);

// JSON document with exactly the config field names.
std::string world_config_to_json(const WorldConfig& config);
WorldConfig world_config_from_json(const std::string& text);

}  // namespace dt
