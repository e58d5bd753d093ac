#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tsc/roadnet.hpp"

namespace tsc {

struct VehicleSpec {
    std::string id;
    long long start_time = 0; // seconds
    std::vector<RoadIndex> route;

    bool operator==(const VehicleSpec&) const = default;
};

struct TurnRatios {
    double left = 0.1;
    double straight = 0.6;
    double right = 0.3;

    /// Throws ConfigError unless all are >= 0 and they sum to 1 (1e-9).
    void validate() const;
    double of(TurnKind kind) const;
};

/// Vehicles sorted by (start_time, id); ids unique.
struct FlowSet {
    std::vector<VehicleSpec> vehicles;

    bool operator==(const FlowSet&) const = default;
};

/// Parses `[{id, start_time, route:[road ids]}, ...]` against `net`.
/// Throws SchemaError for malformed records and RouteError for routes that
/// are disconnected or do not run from an entry road to an exit road.
FlowSet parse_flow(const nlohmann::json& document, const Network& net);
FlowSet parse_flow_text(std::string_view text, const Network& net);
nlohmann::json serialize_flow(const FlowSet& flow, const Network& net);
std::string serialize_flow_text(const FlowSet& flow, const Network& net);
FlowSet load_flow_file(const std::string& path, const Network& net);
void save_flow_file(const FlowSet& flow, const Network& net, const std::string& path);

/// Throws RouteError unless consecutive roads meet at an intersection with a
/// movement between them and the route runs entry road to exit road.
void validate_route(const Network& net, const std::vector<RoadIndex>& route);

/// Continuous Poisson arrival times in [0, horizon) at `rate` per second.
std::vector<double> poisson_arrivals(double rate, double horizon, std::uint64_t seed);

/// Synthetic demand: an independent Poisson stream on every entry road and
/// hop-by-hop routes drawn from `ratios` (renormalized over the turns that
/// exist and do not revisit an intersection). Deterministic in its inputs.
FlowSet generate_flow(const Network& net, double arrival_rate, const TurnRatios& ratios, double horizon,
                      std::uint64_t seed);

/// Sum of road lengths along a route, in meters.
double route_length(const Network& net, const std::vector<RoadIndex>& route);

} // namespace tsc
