#include "tsc/roadnet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tsc/errors.hpp"

namespace tsc {

std::string_view to_string(TurnKind kind) {
    switch (kind) {
    case TurnKind::Left: return "left";
    case TurnKind::Straight: return "straight";
    case TurnKind::Right: return "right";
    }
    return "?";
}

TurnKind turn_kind_from_string(std::string_view text) {
    if (text == "left") return TurnKind::Left;
    if (text == "straight") return TurnKind::Straight;
    if (text == "right") return TurnKind::Right;
    throw SchemaError("unknown turn kind '" + std::string(text) + "'");
}

Topology topology_from_string(std::string_view text) {
    if (text.size() == 1) {
        switch (text[0]) {
        case 'A': return Topology::A;
        case 'B': return Topology::B;
        case 'C': return Topology::C;
        case 'D': return Topology::D;
        default: break;
        }
    }
    throw UnknownPreset("unknown intersection preset '" + std::string(text) + "'");
}

char to_char(Topology topology) { return static_cast<char>(topology); }

bool Lane::serves(TurnKind kind) const {
    return std::find(movement_kinds.begin(), movement_kinds.end(), kind) != movement_kinds.end();
}

namespace {

template <typename T>
void index_ids(const std::vector<T>& items, std::unordered_map<std::string, std::size_t>& out,
               std::string_view what) {
    out.clear();
    out.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].id.empty()) throw SchemaError(std::string(what) + " with empty id");
        if (!out.emplace(items[i].id, i).second)
            throw SchemaError("duplicate " + std::string(what) + " id '" + items[i].id + "'");
    }
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

} // namespace

Network Network::build(NetworkParts parts) {
    Network net;
    net.signalized_right_turns_ = parts.signalized_right_turns;
    net.intersections_ = std::move(parts.intersections);
    net.roads_ = std::move(parts.roads);
    net.lanes_ = std::move(parts.lanes);

    if (net.intersections_.empty()) throw SchemaError("network has no intersections");

    index_ids(net.intersections_, net.intersection_ids_, "intersection");
    index_ids(net.roads_, net.road_ids_, "road");
    index_ids(net.lanes_, net.lane_ids_, "lane");

    const std::size_t n_inter = net.intersections_.size();
    const std::size_t n_roads = net.roads_.size();
    const std::size_t n_lanes = net.lanes_.size();

    for (Lane& lane : net.lanes_) {
        if (!(lane.length > 0.0) || !std::isfinite(lane.length))
            throw SchemaError("lane '" + lane.id + "' must have positive length");
        if (lane.movement_kinds.empty())
            throw SchemaError("lane '" + lane.id + "' serves no movement kind");
        std::sort(lane.movement_kinds.begin(), lane.movement_kinds.end());
        lane.movement_kinds.erase(std::unique(lane.movement_kinds.begin(), lane.movement_kinds.end()),
                                  lane.movement_kinds.end());
        if (lane.road >= n_roads) throw TopologyError("lane '" + lane.id + "' references a missing road");
    }

    std::vector<int> lane_owner_count(n_lanes, 0);
    for (RoadIndex r = 0; r < n_roads; ++r) {
        Road& road = net.roads_[r];
        if (!(road.length > 0.0) || !std::isfinite(road.length))
            throw SchemaError("road '" + road.id + "' must have positive length");
        if (!road.from && !road.to) throw TopologyError("road '" + road.id + "' touches no intersection");
        if ((road.from && *road.from >= n_inter) || (road.to && *road.to >= n_inter))
            throw TopologyError("road '" + road.id + "' references a missing intersection");
        if (road.from && road.to && *road.from == *road.to)
            throw TopologyError("road '" + road.id + "' is a self loop");
        if (road.lanes.empty()) throw TopologyError("road '" + road.id + "' has no lanes");
        for (LaneIndex l : road.lanes) {
            if (l >= n_lanes) throw TopologyError("road '" + road.id + "' references a missing lane");
            if (net.lanes_[l].road != r)
                throw TopologyError("lane '" + net.lanes_[l].id + "' is listed by road '" + road.id +
                                    "' but belongs to another road");
            ++lane_owner_count[l];
        }
        std::sort(road.lanes.begin(), road.lanes.end(), [&](LaneIndex a, LaneIndex b) {
            return net.lanes_[a].position_index < net.lanes_[b].position_index;
        });
        if (road.is_entry()) net.entry_roads_.push_back(r);
        if (road.is_exit()) net.exit_roads_.push_back(r);
    }
    for (LaneIndex l = 0; l < n_lanes; ++l) {
        if (lane_owner_count[l] != 1)
            throw TopologyError("lane '" + net.lanes_[l].id + "' must belong to exactly one road");
    }

    for (IntersectionIndex i = 0; i < n_inter; ++i) {
        Intersection& inter = net.intersections_[i];
        inter.incoming_lanes.clear();
        inter.outgoing_lanes.clear();
        for (const Road& road : net.roads_) {
            if (road.to == i) inter.incoming_lanes.insert(inter.incoming_lanes.end(), road.lanes.begin(), road.lanes.end());
            if (road.from == i) inter.outgoing_lanes.insert(inter.outgoing_lanes.end(), road.lanes.begin(), road.lanes.end());
        }

        for (Movement& m : inter.movements) {
            if (m.from_road >= n_roads || m.to_road >= n_roads)
                throw TopologyError("movement at '" + inter.id + "' references a missing road");
            if (net.roads_[m.from_road].to != i)
                throw TopologyError("movement at '" + inter.id + "' starts on road '" + net.roads_[m.from_road].id +
                                    "' which does not enter it");
            if (net.roads_[m.to_road].from != i)
                throw TopologyError("movement at '" + inter.id + "' ends on road '" + net.roads_[m.to_road].id +
                                    "' which does not leave it");
            if (m.from_lanes.empty()) throw TopologyError("movement at '" + inter.id + "' has no lanes");
            std::sort(m.from_lanes.begin(), m.from_lanes.end());
            m.from_lanes.erase(std::unique(m.from_lanes.begin(), m.from_lanes.end()), m.from_lanes.end());
            for (LaneIndex l : m.from_lanes) {
                if (l >= n_lanes || net.lanes_[l].road != m.from_road)
                    throw TopologyError("movement at '" + inter.id + "' uses a lane off its entry road");
                if (!net.lanes_[l].serves(m.kind))
                    throw TopologyError("lane '" + net.lanes_[l].id + "' does not serve movement kind " +
                                        std::string(to_string(m.kind)));
            }
            m.always_permitted = m.kind == TurnKind::Right && !net.signalized_right_turns_;
        }
        for (std::size_t a = 0; a < inter.movements.size(); ++a) {
            for (std::size_t b = a + 1; b < inter.movements.size(); ++b) {
                if (inter.movements[a].from_road == inter.movements[b].from_road &&
                    inter.movements[a].to_road == inter.movements[b].to_road)
                    throw TopologyError("duplicate movement at '" + inter.id + "'");
            }
        }

        if (inter.phases.size() < 2) throw TopologyError("intersection '" + inter.id + "' needs at least two phases");
        std::sort(inter.phases.begin(), inter.phases.end(),
                  [](const Phase& a, const Phase& b) { return a.index < b.index; });
        std::vector<bool> covered(inter.movements.size(), false);
        for (std::size_t k = 0; k < inter.phases.size(); ++k) {
            Phase& phase = inter.phases[k];
            if (phase.index != static_cast<int>(k))
                throw TopologyError("phase indices of '" + inter.id + "' are not contiguous from 0");
            if (phase.movements.empty()) throw TopologyError("phase " + std::to_string(k) + " of '" + inter.id + "' is empty");
            phase.participating_lanes.clear();
            for (std::size_t m : phase.movements) {
                if (m >= inter.movements.size())
                    throw TopologyError("phase " + std::to_string(k) + " of '" + inter.id + "' references a missing movement");
                covered[m] = true;
                const auto& lanes = inter.movements[m].from_lanes;
                phase.participating_lanes.insert(phase.participating_lanes.end(), lanes.begin(), lanes.end());
            }
            std::sort(phase.participating_lanes.begin(), phase.participating_lanes.end());
            phase.participating_lanes.erase(
                std::unique(phase.participating_lanes.begin(), phase.participating_lanes.end()),
                phase.participating_lanes.end());
        }
        for (std::size_t m = 0; m < inter.movements.size(); ++m) {
            if (!covered[m] && !inter.movements[m].always_permitted)
                throw TopologyError("movement " + std::to_string(m) + " of '" + inter.id + "' is in no phase");
        }
    }

    // Conflicts need the final movement flags, so they are checked last.
    for (IntersectionIndex i = 0; i < n_inter; ++i) {
        const Intersection& inter = net.intersections_[i];
        for (const Phase& phase : inter.phases) {
            for (std::size_t a = 0; a < phase.movements.size(); ++a) {
                for (std::size_t b = a + 1; b < phase.movements.size(); ++b) {
                    if (movements_conflict(net, i, phase.movements[a], phase.movements[b]))
                        throw TopologyError("phase " + std::to_string(phase.index) + " of '" + inter.id +
                                            "' contains conflicting movements");
                }
            }
        }
    }

    std::vector<std::size_t> parent(n_inter);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    for (const Road& road : net.roads_) {
        if (road.from && road.to) parent[find_root(parent, *road.from)] = find_root(parent, *road.to);
    }
    const std::size_t root = find_root(parent, 0);
    for (IntersectionIndex i = 1; i < n_inter; ++i) {
        if (find_root(parent, i) != root) throw TopologyError("road network is not connected");
    }
    return net;
}

std::optional<IntersectionIndex> Network::find_intersection(std::string_view id) const {
    auto it = intersection_ids_.find(std::string(id));
    if (it == intersection_ids_.end()) return std::nullopt;
    return it->second;
}

std::optional<RoadIndex> Network::find_road(std::string_view id) const {
    auto it = road_ids_.find(std::string(id));
    if (it == road_ids_.end()) return std::nullopt;
    return it->second;
}

std::optional<LaneIndex> Network::find_lane(std::string_view id) const {
    auto it = lane_ids_.find(std::string(id));
    if (it == lane_ids_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> Network::find_movement(IntersectionIndex i, RoadIndex from_road, RoadIndex to_road) const {
    const auto& movements = intersections_.at(i).movements;
    for (std::size_t m = 0; m < movements.size(); ++m) {
        if (movements[m].from_road == from_road && movements[m].to_road == to_road) return m;
    }
    return std::nullopt;
}

bool Network::operator==(const Network& other) const {
    return signalized_right_turns_ == other.signalized_right_turns_ && intersections_ == other.intersections_ &&
           roads_ == other.roads_ && lanes_ == other.lanes_;
}

namespace {

double arm_angle(const Point& center, const Point& p) { return std::atan2(p.y - center.y, p.x - center.x); }

// Angle normalized into [0, 2*pi).
double wrap(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    return a < 0.0 ? a + two_pi : a;
}

bool strictly_inside_ccw(double from, double to, double x) {
    // x lies on the open counter-clockwise arc from `from` to `to`.
    return wrap(x - from) > 0.0 && wrap(x - from) < wrap(to - from);
}

} // namespace

bool movements_conflict(const Network& net, IntersectionIndex i, std::size_t m1, std::size_t m2) {
    const Intersection& inter = net.intersection(i);
    const Movement& a = inter.movements.at(m1);
    const Movement& b = inter.movements.at(m2);
    if (m1 == m2 || a.always_permitted || b.always_permitted) return false;
    if (a.to_road == b.to_road) return true; // merge
    if (a.from_road == b.from_road) return false;

    // Right-hand traffic: on each arm the entering stream sits slightly
    // counter-clockwise of the leaving stream.
    constexpr double offset = 1e-3;
    auto in_point = [&](const Movement& m) {
        return wrap(arm_angle(inter.point, net.road(m.from_road).start) + offset);
    };
    auto out_point = [&](const Movement& m) {
        return wrap(arm_angle(inter.point, net.road(m.to_road).end) - offset);
    };
    const double a0 = in_point(a), a1 = out_point(a);
    const double b0 = in_point(b), b1 = out_point(b);
    return strictly_inside_ccw(a0, a1, b0) != strictly_inside_ccw(a0, a1, b1);
}

} // namespace tsc
