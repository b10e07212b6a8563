#include "dt/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

namespace dt {

namespace {

constexpr int kInitAttempts = 10000;
constexpr int kSpawnAttempts = 100;
// Per-step probability of an optional spawn while below max_objects. With
// object lifetimes of roughly 100-250 steps this settles the population
// mid-range between min and max.
constexpr double kSpawnRate = 0.05;

double dist(const Vec2& a, const Vec2& b) { return std::hypot(a.row - b.row, a.col - b.col); }

// The robot occupies a unit disc for collision purposes: objects must keep
// distance > radius + 1 from robot_pos.
bool placement_ok(const Vec2& center, double radius, const std::vector<WorldObject>& objects,
                  const WorldConfig& cfg, std::size_t skip_index) {
    if (dist(center, cfg.robot_pos) <= radius + 1.0) return false;
    for (std::size_t j = 0; j < objects.size(); ++j) {
        if (j == skip_index) continue;
        if (dist(center, objects[j].center) <= radius + objects[j].radius) return false;
    }
    return true;
}

Vec2 heading(double angle, double speed) {
    return {speed * std::cos(angle), speed * std::sin(angle)};
}

// Uniform point on the rectangular ring spawn_margin cells outside the grid
// of cell centers, plus the inward normal angle of the side it landed on.
// Sides are walked in fixed order: top, right, bottom, left.
struct RingPoint {
    Vec2 pos;
    double inward_angle;
};

RingPoint ring_point(Pcg32& rng, const WorldConfig& cfg) {
    const double m = cfg.spawn_margin;
    const double r0 = -m, r1 = cfg.grid_h - 1 + m;
    const double c0 = -m, c1 = cfg.grid_w - 1 + m;
    const double width = c1 - c0, height = r1 - r0;
    const double perimeter = 2.0 * (width + height);
    double u = rng.uniform(0.0, perimeter);
    // Angles in (row, col) components: 0 points toward +row (down).
    const double down = 0.0, up = std::numbers::pi;
    const double right = std::numbers::pi / 2.0, left = -std::numbers::pi / 2.0;
    if (u < width) return {{r0, c0 + u}, down};
    u -= width;
    if (u < height) return {{r0 + u, c1}, left};
    u -= height;
    if (u < width) return {{r1, c1 - u}, up};
    u -= width;
    return {{r1 - u, c0}, right};
}

bool try_spawn(WorldState& state, const WorldConfig& cfg, int attempts) {
    for (int a = 0; a < attempts; ++a) {
        const double radius = state.rng.uniform(cfg.radius_range[0], cfg.radius_range[1]);
        const double speed = state.rng.uniform(cfg.speed_range[0], cfg.speed_range[1]);
        const RingPoint rp = ring_point(state.rng, cfg);
        // Aim into the grid with up to +-45 degrees of spread.
        const double angle =
            rp.inward_angle + state.rng.uniform(-std::numbers::pi / 4.0, std::numbers::pi / 4.0);
        if (!placement_ok(rp.pos, radius, state.objects, cfg, state.objects.size())) continue;
        state.objects.push_back(
            {rp.pos, heading(angle, speed), radius, cfg.shape, state.next_id++});
        return true;
    }
    return false;
}

}  // namespace

void WorldConfig::validate() const {
    if (grid_h < 1 || grid_w < 1) throw std::invalid_argument("world: grid dims must be positive");
    if (min_objects < 0 || max_objects < min_objects)
        throw std::invalid_argument("world: need 0 <= min_objects <= max_objects");
    if (!(radius_range[0] > 0.0) || radius_range[1] < radius_range[0])
        throw std::invalid_argument("world: radius_range must be a positive interval");
    if (!(speed_range[0] > 0.0) || speed_range[1] < speed_range[0])
        throw std::invalid_argument("world: speed_range must be a positive interval");
    if (spawn_margin < 0.0) throw std::invalid_argument("world: spawn_margin must be >= 0");
}

WorldState init_world(const WorldConfig& config) {
    config.validate();
    WorldState state;
    state.rng = Pcg32(config.seed, 0);
    state.time = 0;

    const int count =
        config.min_objects +
        static_cast<int>(state.rng.next_below(
            static_cast<std::uint32_t>(config.max_objects - config.min_objects + 1)));

    for (int k = 0; k < count; ++k) {
        bool placed = false;
        for (int a = 0; a < kInitAttempts; ++a) {
            Vec2 center{state.rng.uniform(0.0, config.grid_h - 1),
                        state.rng.uniform(0.0, config.grid_w - 1)};
            const double radius = state.rng.uniform(config.radius_range[0], config.radius_range[1]);
            const double speed = state.rng.uniform(config.speed_range[0], config.speed_range[1]);
            const double angle = state.rng.uniform(0.0, 2.0 * std::numbers::pi);
            if (!placement_ok(center, radius, state.objects, config, state.objects.size()))
                continue;
            state.objects.push_back(
                {center, heading(angle, speed), radius, config.shape, state.next_id++});
            placed = true;
            break;
        }
        if (!placed)
            throw std::runtime_error("init_world: configuration infeasible, could not place object " +
                                     std::to_string(k + 1) + " of " + std::to_string(count));
    }
    return state;
}

WorldState step_world(const WorldState& state, const WorldConfig& config) {
    config.validate();
    WorldState next = state;

    // Move objects in index order. A blocked move leaves the center in place
    // (which is known collision-free) and reflects the velocity off the
    // blocker, so the non-overlap invariants hold unconditionally.
    for (std::size_t i = 0; i < next.objects.size(); ++i) {
        WorldObject& obj = next.objects[i];
        const Vec2 proposed{obj.center.row + obj.velocity.row, obj.center.col + obj.velocity.col};

        Vec2 blocker;
        bool blocked = false;
        if (dist(proposed, config.robot_pos) <= obj.radius + 1.0) {
            blocker = config.robot_pos;
            blocked = true;
        } else {
            for (std::size_t j = 0; j < next.objects.size(); ++j) {
                if (j == i) continue;
                if (dist(proposed, next.objects[j].center) <= obj.radius + next.objects[j].radius) {
                    blocker = next.objects[j].center;
                    blocked = true;
                    break;
                }
            }
        }

        if (!blocked) {
            obj.center = proposed;
            continue;
        }
        const double d = dist(blocker, obj.center);
        if (d <= 0.0) continue;  // degenerate; cannot happen from a valid state
        const double nr = (blocker.row - obj.center.row) / d;
        const double nc = (blocker.col - obj.center.col) / d;
        const double vn = obj.velocity.row * nr + obj.velocity.col * nc;
        if (vn > 0.0) {
            // Elastic bounce: flip the velocity component along the line of
            // centers, keep the tangential component and the speed.
            obj.velocity.row -= 2.0 * vn * nr;
            obj.velocity.col -= 2.0 * vn * nc;
        } else {
            // Already moving away yet still blocked (multi-object squeeze):
            // back out the way we came.
            obj.velocity.row = -obj.velocity.row;
            obj.velocity.col = -obj.velocity.col;
        }
    }

    // Despawn objects that left the ring.
    const double m = config.spawn_margin;
    std::erase_if(next.objects, [&](const WorldObject& o) {
        return o.center.row < -m || o.center.row > config.grid_h - 1 + m || o.center.col < -m ||
               o.center.col > config.grid_w - 1 + m;
    });

    while (static_cast<int>(next.objects.size()) < config.min_objects) {
        if (!try_spawn(next, config, kInitAttempts))
            throw std::runtime_error("step_world: cannot restock to min_objects");
    }
    if (static_cast<int>(next.objects.size()) < config.max_objects &&
        next.rng.next_double() < kSpawnRate) {
        try_spawn(next, config, kSpawnAttempts);  // silently skipped when crowded
    }

    next.time = state.time + 1;
    return next;
}

OccupancyGrid rasterize(const WorldState& state, const WorldConfig& config) {
    OccupancyGrid grid(config.grid_h, config.grid_w);
    for (const auto& obj : state.objects)
        for (int idx : object_cells(obj, config.grid_h, config.grid_w))
            grid.cells[static_cast<std::size_t>(idx)] = 1;
    return grid;
}

std::vector<int> object_cells(const WorldObject& obj, int grid_h, int grid_w) {
    std::vector<int> cells;
    const int i_lo = std::max(0, static_cast<int>(std::ceil(obj.center.row - obj.radius)));
    const int i_hi = std::min(grid_h - 1, static_cast<int>(std::floor(obj.center.row + obj.radius)));
    const int j_lo = std::max(0, static_cast<int>(std::ceil(obj.center.col - obj.radius)));
    const int j_hi = std::min(grid_w - 1, static_cast<int>(std::floor(obj.center.col + obj.radius)));
    for (int i = i_lo; i <= i_hi; ++i) {
        for (int j = j_lo; j <= j_hi; ++j) {
            const double dr = i - obj.center.row, dc = j - obj.center.col;
            const bool inside = obj.shape == Shape::circle
                                    ? std::hypot(dr, dc) <= obj.radius
                                    : std::max(std::abs(dr), std::abs(dc)) <= obj.radius;
            if (inside) cells.push_back(i * grid_w + j);
        }
    }
    return cells;
}

std::string world_config_to_json(const WorldConfig& config) {
    nlohmann::ordered_json j;
    j["grid_h"] = config.grid_h;
    j["grid_w"] = config.grid_w;
    j["robot_pos"] = {config.robot_pos.row, config.robot_pos.col};
    j["min_objects"] = config.min_objects;
    j["max_objects"] = config.max_objects;
    j["radius_range"] = {config.radius_range[0], config.radius_range[1]};
    j["speed_range"] = {config.speed_range[0], config.speed_range[1]};
    j["shape"] = config.shape == Shape::circle ? "circle" : "square";
    j["spawn_margin"] = config.spawn_margin;
    j["seed"] = config.seed;
    return j.dump(2) + "\n";
}

WorldConfig world_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("world config: invalid JSON: ") + e.what());
    }
    WorldConfig cfg;
    try {
        if (j.contains("grid_h")) cfg.grid_h = j.at("grid_h").get<int>();
        if (j.contains("grid_w")) cfg.grid_w = j.at("grid_w").get<int>();
        if (j.contains("robot_pos")) {
            cfg.robot_pos.row = j.at("robot_pos").at(0).get<double>();
            cfg.robot_pos.col = j.at("robot_pos").at(1).get<double>();
        }
        if (j.contains("min_objects")) cfg.min_objects = j.at("min_objects").get<int>();
        if (j.contains("max_objects")) cfg.max_objects = j.at("max_objects").get<int>();
        if (j.contains("radius_range")) {
            cfg.radius_range[0] = j.at("radius_range").at(0).get<double>();
            cfg.radius_range[1] = j.at("radius_range").at(1).get<double>();
        }
        if (j.contains("speed_range")) {
            cfg.speed_range[0] = j.at("speed_range").at(0).get<double>();
            cfg.speed_range[1] = j.at("speed_range").at(1).get<double>();
        }
        if (j.contains("shape")) {
            const std::string s = j.at("shape").get<std::string>();
            if (s == "circle")
                cfg.shape = Shape::circle;
            else if (s == "square")
                cfg.shape = Shape::square;
            else
                throw std::runtime_error("world config: unknown shape \"" + s + "\"");
        }
        if (j.contains("spawn_margin")) cfg.spawn_margin = j.at("spawn_margin").get<double>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("world config: bad field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace dt
