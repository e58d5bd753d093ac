#pragma once

#include <array>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsc/flow.hpp"
#include "tsc/roadnet.hpp"

namespace tsc {

struct SimOptions {
    double v_max = 10.0;        // m/s
    double spacing = 7.5;       // m between stacked vehicles
    int headway = 2;            // s between discharges from one lane
    int yellow = 5;             // s inserted on every phase change
    bool all_green = false;     // every movement always served
    bool lane_capacity = false; // block discharge into full lanes
};

enum class VehicleMode : std::uint8_t { Moving, Queued };

struct VehicleState {
    std::size_t spec = 0;       // index into FlowSet::vehicles
    std::size_t route_pos = 0;  // index of the current road in the route
    LaneIndex lane = 0;
    double distance = 0.0;      // to the stop line
    VehicleMode mode = VehicleMode::Moving;
    long long enter_time = 0;
    std::optional<long long> exit_time;
};

struct SignalDisplay {
    int green_phase = -1; // -1 before the first decision: nothing signalized is served
    int yellow_remaining = 0;
};

struct LaneObservation {
    int queue = 0;
    std::array<int, 4> segments{}; // 100 m bands from the stop line
    bool operator==(const LaneObservation&) const = default;
};

struct VehicleRecord {
    std::string id;
    long long enter_time = 0;
    std::optional<long long> exit_time;
    bool operator==(const VehicleRecord&) const = default;
};

struct DecisionRecord {
    long long time = 0;
    IntersectionIndex intersection = 0;
    int phase = 0;
    int duration = 0;
    bool operator==(const DecisionRecord&) const = default;
};

struct StepRecord {
    long long time = 0; // clock after the step
    std::size_t injected = 0;
    std::size_t in_network = 0;
    std::size_t exited = 0;
    std::vector<int> queues; // total incoming queue per intersection
    bool operator==(const StepRecord&) const = default;
};

struct EpisodeLog {
    std::vector<VehicleRecord> vehicles; // injection order
    std::vector<DecisionRecord> decisions;
    std::vector<StepRecord> steps;

    /// Line records, one per event:
    ///   V,<vehicle id>,<enter>,<exit or ->
    ///   D,<time>,<intersection index>,<phase>,<duration>
    ///   Q,<time>,<injected>,<in network>,<exited>,<queue 0>;<queue 1>;...
    std::string serialize() const;
    bool operator==(const EpisodeLog&) const = default;
};

/// Mutable simulation state over an immutable network and flow.
class World {
public:
    World(const Network& net, const FlowSet& flow, SimOptions options = {},
          std::optional<long long> injection_end = std::nullopt);

    /// Advances the clock by one second.
    void step();

    /// Shows `phase` at intersection `i`. A change of phase starts a yellow
    /// interval; showing the current phase again does nothing. Returns true
    /// when yellow was inserted. Throws InvalidPhase.
    bool set_phase(IntersectionIndex i, int phase);

    const Network& network() const { return *net_; }
    const FlowSet& flow() const { return *flow_; }
    const SimOptions& options() const { return options_; }
    long long clock() const { return clock_; }
    const SignalDisplay& display(IntersectionIndex i) const { return displays_.at(i); }
    bool permitted(IntersectionIndex i, std::size_t movement) const;

    LaneObservation observe_lane(LaneIndex lane) const;
    /// One observation per lane of Intersection::incoming_lanes, same order.
    std::vector<LaneObservation> observe(IntersectionIndex i) const;
    /// Queue count of every incoming and outgoing lane of `i`.
    std::unordered_map<LaneIndex, double> queue_map(IntersectionIndex i) const;
    int intersection_queue(IntersectionIndex i) const;

    std::size_t injected() const { return injected_; }
    std::size_t exited() const { return exited_; }
    std::size_t in_network() const { return injected_ - exited_; }
    /// Vehicles still to be injected (before the injection end).
    std::size_t pending() const;
    bool empty() const { return in_network() == 0 && pending() == 0; }

    const std::vector<VehicleState>& vehicles() const { return vehicles_; }
    const std::deque<std::size_t>& lane_vehicles(LaneIndex lane) const { return lanes_.at(lane); }

private:
    LaneIndex choose_lane(const VehicleSpec& spec, std::size_t route_pos) const;
    void place(std::size_t vehicle, LaneIndex lane);

    const Network* net_;
    const FlowSet* flow_;
    SimOptions options_;
    long long clock_ = 0;
    std::size_t next_spec_ = 0;
    std::size_t spec_end_ = 0;
    std::size_t injected_ = 0;
    std::size_t exited_ = 0;
    std::vector<VehicleState> vehicles_;
    std::vector<std::deque<std::size_t>> lanes_; // front = closest to the stop line
    std::vector<long long> last_discharge_;
    std::vector<SignalDisplay> displays_;
    std::vector<std::vector<bool>> in_phase_; // [intersection][phase * movements + movement]
};

struct Decision {
    int phase = 0;
    int duration = 0;
};

/// Per-second signal control. tick() runs once per intersection before every
/// step and returns the decision it took, if any.
class Controller {
public:
    virtual ~Controller() = default;
    virtual void reset(const World& world) = 0;
    virtual std::optional<Decision> tick(World& world, IntersectionIndex i) = 0;
};

struct EpisodeOptions {
    long long horizon = 3600;
    bool drain = false;
    SimOptions sim;
};

/// Runs one episode. With drain set, injections stop at the horizon and the
/// episode continues until the network is empty; DrainTimeout is raised if
/// vehicles remain at four times the horizon.
EpisodeLog run_episode(const Network& net, const FlowSet& flow, Controller& controller, const EpisodeOptions& options);

/// Controller that never changes anything; useful with SimOptions::all_green.
class NullController : public Controller {
public:
    void reset(const World&) override {}
    std::optional<Decision> tick(World&, IntersectionIndex) override { return std::nullopt; }
};

} // namespace tsc
