#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace tsc {

using LaneIndex = std::size_t;
using RoadIndex = std::size_t;
using IntersectionIndex = std::size_t;

enum class TurnKind : std::uint8_t { Left = 0, Straight = 1, Right = 2 };

std::string_view to_string(TurnKind kind);
TurnKind turn_kind_from_string(std::string_view text);

/// Intersection layout presets. Each one fixes lane counts per approach and a
/// documented phase table; see preset_phase_table().
enum class Topology : char { A = 'A', B = 'B', C = 'C', D = 'D' };

Topology topology_from_string(std::string_view text);
char to_char(Topology topology);

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

struct Lane {
    std::string id;
    RoadIndex road = 0;
    double length = 0.0; // meters
    std::vector<TurnKind> movement_kinds; // sorted, unique
    int position_index = 0; // 0 = leftmost lane of the road

    bool serves(TurnKind kind) const;
    bool operator==(const Lane&) const = default;
};

struct Road {
    std::string id;
    std::optional<IntersectionIndex> from; // nullopt: enters from outside the grid
    std::optional<IntersectionIndex> to;   // nullopt: leaves the grid
    Point start;
    Point end;
    double length = 0.0;
    std::vector<LaneIndex> lanes; // ordered by position_index

    bool is_entry() const { return !from.has_value(); }
    bool is_exit() const { return !to.has_value(); }
    bool operator==(const Road&) const = default;
};

struct Movement {
    RoadIndex from_road = 0;
    std::vector<LaneIndex> from_lanes;
    RoadIndex to_road = 0;
    TurnKind kind = TurnKind::Straight;
    // Right turns pass regardless of the signal unless the network opts into
    // signalized right turns.
    bool always_permitted = false;

    bool operator==(const Movement&) const = default;
};

struct Phase {
    int index = 0;
    std::vector<std::size_t> movements; // indices into Intersection::movements
    std::vector<LaneIndex> participating_lanes; // derived, sorted

    bool operator==(const Phase&) const = default;
};

struct Intersection {
    std::string id;
    Point point;
    Topology topology = Topology::A;
    std::vector<LaneIndex> incoming_lanes; // derived from roads
    std::vector<LaneIndex> outgoing_lanes; // derived from roads
    std::vector<Movement> movements;
    std::vector<Phase> phases;

    bool operator==(const Intersection&) const = default;
};

/// Raw description of a network before validation. parse_roadnet() and
/// build_grid() both fill one of these and hand it to Network::build().
struct NetworkParts {
    bool signalized_right_turns = false;
    std::vector<Intersection> intersections; // derived fields may be empty
    std::vector<Road> roads;
    std::vector<Lane> lanes;
};

/// Immutable, validated road network.
class Network {
public:
    /// Validates the parts, fills derived fields and returns the network.
    /// Throws SchemaError or TopologyError.
    static Network build(NetworkParts parts);

    const std::vector<Intersection>& intersections() const { return intersections_; }
    const std::vector<Road>& roads() const { return roads_; }
    const std::vector<Lane>& lanes() const { return lanes_; }

    const Intersection& intersection(IntersectionIndex i) const { return intersections_.at(i); }
    const Road& road(RoadIndex r) const { return roads_.at(r); }
    const Lane& lane(LaneIndex l) const { return lanes_.at(l); }

    std::optional<IntersectionIndex> find_intersection(std::string_view id) const;
    std::optional<RoadIndex> find_road(std::string_view id) const;
    std::optional<LaneIndex> find_lane(std::string_view id) const;

    const std::vector<RoadIndex>& entry_roads() const { return entry_roads_; }
    const std::vector<RoadIndex>& exit_roads() const { return exit_roads_; }

    /// Movement of intersection `i` taking vehicles from `from_road` onto
    /// `to_road`, if any.
    std::optional<std::size_t> find_movement(IntersectionIndex i, RoadIndex from_road, RoadIndex to_road) const;

    bool signalized_right_turns() const { return signalized_right_turns_; }

    bool operator==(const Network& other) const;

private:
    Network() = default;

    bool signalized_right_turns_ = false;
    std::vector<Intersection> intersections_;
    std::vector<Road> roads_;
    std::vector<Lane> lanes_;
    std::vector<RoadIndex> entry_roads_;
    std::vector<RoadIndex> exit_roads_;
    std::unordered_map<std::string, IntersectionIndex> intersection_ids_;
    std::unordered_map<std::string, RoadIndex> road_ids_;
    std::unordered_map<std::string, LaneIndex> lane_ids_;
};

/// True when the two movements of intersection `i` cannot be green together.
/// Arms are placed on a circle by road geometry (right-hand traffic); two
/// movements conflict when their paths cross or merge into the same road.
/// Always-permitted right turns never conflict.
bool movements_conflict(const Network& net, IntersectionIndex i, std::size_t m1, std::size_t m2);

// ---------------------------------------------------------------------------
// Presets

/// Approach arms, clockwise. Turning left from arm `a` leads to arm a+1,
/// straight to a+2 and right to a+3 (mod 4).
enum class Arm : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

Arm turn_target(Arm from, TurnKind kind);

struct MovementTemplate {
    Arm from;
    TurnKind kind;
    bool operator==(const MovementTemplate&) const = default;
};

struct PhaseTemplate {
    std::vector<MovementTemplate> movements; // non-right movements only
};

struct ApproachLayout {
    Arm arm;
    std::vector<std::vector<TurnKind>> lanes; // by position_index
};

struct PresetLayout {
    Topology topology;
    std::vector<ApproachLayout> approaches; // present arms only
    std::vector<PhaseTemplate> phases;
};

/// The documented phase table of a preset, in the canonical orientation.
/// Phase order is the cyclic order used by fixed-time and cyclic control.
///
///   A  4 arms, 3 lanes per approach (L | S | R).
///      0 NS-straight, 1 EW-straight, 2 NS-left, 3 EW-left
///   B  4 arms; E/W approaches have 3 lanes (L | S | R), N/S approaches 2
///      lanes (L | S+R).
///      0 EW-straight, 1 EW-left, 2 N approach (L+S), 3 S approach (L+S)
///   C  T-junction with arms W, E, S; 2 lanes per approach
///      (W: S | R, E: L | S, S: L | R).
///      0 E+W straight, 1 E straight+left, 2 S left
///   D  4 arms, one shared L+S+R lane per approach.
///      0 N approach, 1 E approach, 2 S approach, 3 W approach
const PresetLayout& preset_layout(Topology topology);
const std::vector<PhaseTemplate>& preset_phase_table(Topology topology);

/// Rectangular grid of `rows` x `cols` intersections of a single preset.
/// East-west roads are `ew_length` long, north-south roads `ns_length`.
/// Preset C (a three-arm junction) alternates the missing arm so that the
/// grid stays connected.
Network build_grid(int rows, int cols, Topology preset, double ew_length, double ns_length);

// ---------------------------------------------------------------------------
// File schema

/// Parses a road-network document (see docs in README). Throws SchemaError
/// for malformed fields and TopologyError for invalid structure.
Network parse_roadnet(const nlohmann::json& document);
Network parse_roadnet_text(std::string_view text);
nlohmann::json serialize_roadnet(const Network& net);
std::string serialize_roadnet_text(const Network& net);

Network load_roadnet_file(const std::string& path);
void save_roadnet_file(const Network& net, const std::string& path);

} // namespace tsc
