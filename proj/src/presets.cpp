#include <array>
#include <cmath>
#include <map>

#include "tsc/errors.hpp"
#include "tsc/roadnet.hpp"

namespace tsc {

Arm turn_target(Arm from, TurnKind kind) {
    int offset = 0;
    switch (kind) {
    case TurnKind::Left: offset = 1; break;
    case TurnKind::Straight: offset = 2; break;
    case TurnKind::Right: offset = 3; break;
    }
    return static_cast<Arm>((static_cast<int>(from) + offset) % 4);
}

namespace {

using K = TurnKind;
constexpr Arm N = Arm::North, E = Arm::East, S = Arm::South, W = Arm::West;

PresetLayout make_a() {
    PresetLayout p{Topology::A, {}, {}};
    for (Arm a : {N, E, S, W}) p.approaches.push_back({a, {{K::Left}, {K::Straight}, {K::Right}}});
    p.phases = {
        {{{N, K::Straight}, {S, K::Straight}}},
        {{{E, K::Straight}, {W, K::Straight}}},
        {{{N, K::Left}, {S, K::Left}}},
        {{{E, K::Left}, {W, K::Left}}},
    };
    return p;
}

PresetLayout make_b() {
    PresetLayout p{Topology::B, {}, {}};
    p.approaches = {
        {N, {{K::Left}, {K::Straight, K::Right}}},
        {E, {{K::Left}, {K::Straight}, {K::Right}}},
        {S, {{K::Left}, {K::Straight, K::Right}}},
        {W, {{K::Left}, {K::Straight}, {K::Right}}},
    };
    p.phases = {
        {{{E, K::Straight}, {W, K::Straight}}},
        {{{E, K::Left}, {W, K::Left}}},
        {{{N, K::Left}, {N, K::Straight}}},
        {{{S, K::Left}, {S, K::Straight}}},
    };
    return p;
}

PresetLayout make_c() {
    PresetLayout p{Topology::C, {}, {}};
    p.approaches = {
        {E, {{K::Left}, {K::Straight}}},
        {S, {{K::Left}, {K::Right}}},
        {W, {{K::Straight}, {K::Right}}},
    };
    p.phases = {
        {{{E, K::Straight}, {W, K::Straight}}},
        {{{E, K::Straight}, {E, K::Left}}},
        {{{S, K::Left}}},
    };
    return p;
}

PresetLayout make_d() {
    PresetLayout p{Topology::D, {}, {}};
    for (Arm a : {N, E, S, W}) p.approaches.push_back({a, {{K::Left, K::Straight, K::Right}}});
    for (Arm a : {N, E, S, W}) p.phases.push_back({{{a, K::Left}, {a, K::Straight}}});
    return p;
}

Arm rotate(Arm a, int k) { return static_cast<Arm>((static_cast<int>(a) + k) % 4); }

// Unit step when leaving a node through an arm; y points north.
std::array<int, 2> arm_step(Arm a) {
    switch (a) {
    case Arm::North: return {0, 1};
    case Arm::East: return {1, 0};
    case Arm::South: return {0, -1};
    case Arm::West: return {-1, 0};
    }
    return {0, 0};
}

Arm opposite(Arm a) { return rotate(a, 2); }

// Direction code used in road ids: 0 east, 1 north, 2 west, 3 south.
int road_dir_code(Arm a) {
    switch (a) {
    case Arm::East: return 0;
    case Arm::North: return 1;
    case Arm::West: return 2;
    case Arm::South: return 3;
    }
    return 0;
}

struct GridNode {
    int x = 0;
    int y = 0;
    bool operator<(const GridNode& o) const { return x != o.x ? x < o.x : y < o.y; }
};

} // namespace

const PresetLayout& preset_layout(Topology topology) {
    static const PresetLayout a = make_a(), b = make_b(), c = make_c(), d = make_d();
    switch (topology) {
    case Topology::A: return a;
    case Topology::B: return b;
    case Topology::C: return c;
    case Topology::D: return d;
    }
    throw UnknownPreset("unknown intersection preset");
}

const std::vector<PhaseTemplate>& preset_phase_table(Topology topology) { return preset_layout(topology).phases; }

Network build_grid(int rows, int cols, Topology preset, double ew_length, double ns_length) {
    if (rows < 1 || cols < 1) throw ConfigError("grid needs at least one row and one column");
    if (!(ew_length > 0.0) || !(ns_length > 0.0)) throw ConfigError("grid road lengths must be positive");
    const PresetLayout& layout = preset_layout(preset);

    // Rotation (clockwise quarter turns) applied to the canonical layout at
    // each node. Only the three-arm preset needs one.
    auto rotation_at = [&](int x, int y) -> int {
        if (preset != Topology::C) return 0;
        Arm missing;
        if (rows == 1) missing = (x % 2 == 0) ? N : S;
        else missing = ((x + y) % 2 == 0) ? W : E;
        return static_cast<int>(missing); // canonical missing arm is north
    };
    auto is_real = [&](int x, int y) { return x >= 1 && x <= cols && y >= 1 && y <= rows; };
    auto approach_at = [&](int x, int y, Arm arm) -> const ApproachLayout* {
        const int k = rotation_at(x, y);
        for (const ApproachLayout& ap : layout.approaches) {
            if (rotate(ap.arm, k) == arm) return &ap;
        }
        return nullptr;
    };
    auto has_arm = [&](int x, int y, Arm arm) { return approach_at(x, y, arm) != nullptr; };
    auto point_of = [&](int x, int y) { return Point{x * ew_length, y * ns_length}; };

    NetworkParts parts;
    std::map<GridNode, IntersectionIndex> node_index;
    for (int y = 1; y <= rows; ++y) {
        for (int x = 1; x <= cols; ++x) {
            Intersection inter;
            inter.id = "intersection_" + std::to_string(x) + "_" + std::to_string(y);
            inter.point = point_of(x, y);
            inter.topology = preset;
            node_index[{x, y}] = parts.intersections.size();
            parts.intersections.push_back(std::move(inter));
        }
    }

    // in_road[node][arm]: road arriving at the node from that arm.
    std::map<GridNode, std::array<std::optional<RoadIndex>, 4>> in_road, out_road;
    for (int y = 0; y <= rows + 1; ++y) {
        for (int x = 0; x <= cols + 1; ++x) {
            for (Arm dir : {E, N, W, S}) {
                const auto step = arm_step(dir);
                const int nx = x + step[0], ny = y + step[1];
                const bool from_real = is_real(x, y), to_real = is_real(nx, ny);
                if (!from_real && !to_real) continue;
                if (from_real && !has_arm(x, y, dir)) continue;
                if (to_real && !has_arm(nx, ny, opposite(dir))) continue;

                Road road;
                road.id = "road_" + std::to_string(x) + "_" + std::to_string(y) + "_" + std::to_string(road_dir_code(dir));
                if (from_real) road.from = node_index.at({x, y});
                if (to_real) road.to = node_index.at({nx, ny});
                road.start = point_of(x, y);
                road.end = point_of(nx, ny);
                road.length = (step[0] != 0) ? ew_length : ns_length;
                const RoadIndex r = parts.roads.size();

                std::vector<std::vector<TurnKind>> lane_kinds;
                if (to_real) lane_kinds = approach_at(nx, ny, opposite(dir))->lanes;
                else lane_kinds = {{K::Straight}};
                for (std::size_t k = 0; k < lane_kinds.size(); ++k) {
                    Lane lane;
                    lane.id = road.id + "_" + std::to_string(k);
                    lane.road = r;
                    lane.length = road.length;
                    lane.movement_kinds = lane_kinds[k];
                    lane.position_index = static_cast<int>(k);
                    road.lanes.push_back(parts.lanes.size());
                    parts.lanes.push_back(std::move(lane));
                }
                if (to_real) in_road[{nx, ny}][static_cast<int>(opposite(dir))] = r;
                if (from_real) out_road[{x, y}][static_cast<int>(dir)] = r;
                parts.roads.push_back(std::move(road));
            }
        }
    }

    for (int y = 1; y <= rows; ++y) {
        for (int x = 1; x <= cols; ++x) {
            Intersection& inter = parts.intersections[node_index.at({x, y})];
            const int k = rotation_at(x, y);
            std::map<std::pair<int, int>, std::size_t> movement_of; // (arm, kind) -> movement
            for (Arm arm : {N, E, S, W}) {
                const ApproachLayout* ap = approach_at(x, y, arm);
                if (!ap) continue;
                const RoadIndex from_road = *in_road[{x, y}][static_cast<int>(arm)];
                for (TurnKind kind : {K::Left, K::Straight, K::Right}) {
                    Movement m;
                    m.from_road = from_road;
                    m.kind = kind;
                    for (LaneIndex l : parts.roads[from_road].lanes) {
                        if (parts.lanes[l].serves(kind)) m.from_lanes.push_back(l);
                    }
                    if (m.from_lanes.empty()) continue;
                    const auto target = out_road[{x, y}][static_cast<int>(turn_target(arm, kind))];
                    if (!target) throw TopologyError("preset lane layout feeds a missing arm");
                    m.to_road = *target;
                    movement_of[{static_cast<int>(arm), static_cast<int>(kind)}] = inter.movements.size();
                    inter.movements.push_back(std::move(m));
                }
            }
            for (std::size_t p = 0; p < layout.phases.size(); ++p) {
                Phase phase;
                phase.index = static_cast<int>(p);
                for (const MovementTemplate& t : layout.phases[p].movements) {
                    phase.movements.push_back(
                        movement_of.at({static_cast<int>(rotate(t.from, k)), static_cast<int>(t.kind)}));
                }
                inter.phases.push_back(std::move(phase));
            }
        }
    }
    return Network::build(std::move(parts));
}

} // namespace tsc
