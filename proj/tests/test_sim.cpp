#include <doctest.h>

#include "tsc/errors.hpp"
#include "tsc/sim.hpp"

using namespace tsc;

namespace {

FlowSet one_vehicle(const Network& net, std::vector<std::string> roads, long long start = 0) {
    nlohmann::json doc = nlohmann::json::array();
    doc.push_back({{"id", "v0"}, {"start_time", start}, {"route", roads}});
    return parse_flow(doc, net);
}

// West entry to east exit through a single intersection.
const std::vector<std::string> kWestEast{"road_0_1_0", "road_1_1_0"};

int phase_serving(const Network& net, IntersectionIndex i, const std::string& from, const std::string& to) {
    const auto m = *net.find_movement(i, *net.find_road(from), *net.find_road(to));
    for (const Phase& p : net.intersection(i).phases)
        for (std::size_t x : p.movements)
            if (x == m) return p.index;
    return -1;
}

// Shows one phase forever.
class HoldController : public Controller {
public:
    explicit HoldController(int phase) : phase_(phase) {}
    void reset(const World&) override {}
    std::optional<Decision> tick(World& w, IntersectionIndex i) override {
        if (w.display(i).green_phase == phase_) return std::nullopt;
        w.set_phase(i, phase_);
        return Decision{phase_, 0};
    }

private:
    int phase_;
};

// Cycles through phases with a fixed green, yellow inserted by the world.
class CycleController : public Controller {
public:
    explicit CycleController(int green) : green_(green) {}
    void reset(const World& w) override { next_.assign(w.network().intersections().size(), 0); phase_.assign(next_.size(), -1); }
    std::optional<Decision> tick(World& w, IntersectionIndex i) override {
        if (w.clock() < next_[i]) return std::nullopt;
        const int n = static_cast<int>(w.network().intersection(i).phases.size());
        phase_[i] = (phase_[i] + 1) % n;
        const bool yellow = w.set_phase(i, phase_[i]);
        next_[i] = w.clock() + green_ + (yellow ? w.options().yellow : 0);
        return Decision{phase_[i], green_};
    }

private:
    int green_;
    std::vector<long long> next_;
    std::vector<int> phase_;
};

} // namespace

TEST_CASE("free-flow travel times on 500, 400 and 300 m routes") {
    for (auto [half, expected] : {std::pair{250.0, 50}, std::pair{200.0, 40}, std::pair{150.0, 30}}) {
        const Network net = build_grid(1, 1, Topology::A, half, 300);
        const FlowSet flow = one_vehicle(net, kWestEast, 3);
        NullController none;
        EpisodeOptions opt;
        opt.horizon = 30;
        opt.drain = true;
        opt.sim.all_green = true;
        const EpisodeLog log = run_episode(net, flow, none, opt);
        REQUIRE(log.vehicles.size() == 1);
        REQUIRE(log.vehicles[0].exit_time);
        CHECK(*log.vehicles[0].exit_time - log.vehicles[0].enter_time == expected);
        CHECK(log.vehicles[0].enter_time == 3);
    }
}

TEST_CASE("red signal holds a queued vehicle in place") {
    const Network net = build_grid(1, 1, Topology::A, 200, 200);
    const FlowSet flow = one_vehicle(net, kWestEast);
    World w(net, flow);
    const int serving = phase_serving(net, 0, kWestEast[0], kWestEast[1]);
    const int other = (serving + 2) % 4;
    w.set_phase(0, other);
    for (int k = 0; k < 25; ++k) w.step();
    const VehicleState& v = w.vehicles().at(0);
    REQUIRE(v.distance == 0.0);
    const LaneObservation before = w.observe_lane(v.lane);
    CHECK(before.queue == 1);
    for (int k = 0; k < 40; ++k) {
        w.step();
        CHECK(w.vehicles()[0].distance == 0.0);
        CHECK(w.observe_lane(v.lane).queue == 1);
    }
    // Switching to the serving phase releases it only after the yellow.
    CHECK(w.set_phase(0, serving));
    for (int k = 0; k < 5; ++k) {
        w.step();
        CHECK(w.exited() == 0);
        CHECK(w.vehicles()[0].route_pos == 0);
    }
    w.step();
    CHECK(w.vehicles()[0].route_pos == 1);
}

TEST_CASE("set_phase yellow rules") {
    const Network net = build_grid(1, 1, Topology::A, 200, 200);
    const FlowSet flow;
    World w(net, flow);
    CHECK_FALSE(w.set_phase(0, 1)); // first display: nothing to clear
    CHECK(w.display(0).yellow_remaining == 0);
    CHECK(w.set_phase(0, 2));
    CHECK(w.display(0).yellow_remaining == 5);
    w.step();
    CHECK(w.display(0).yellow_remaining == 4);
    CHECK_FALSE(w.set_phase(0, 2));
    CHECK(w.display(0).yellow_remaining == 4);
    CHECK_THROWS_AS(w.set_phase(0, 4), InvalidPhase);
    CHECK_THROWS_AS(w.set_phase(0, -1), InvalidPhase);
}

TEST_CASE("observation bands") {
    {
        const Network net = build_grid(1, 1, Topology::A, 400, 400);
        const FlowSet flow = one_vehicle(net, kWestEast);
        World w(net, flow);
        w.set_phase(0, 0);
        for (LaneIndex l : net.intersection(0).incoming_lanes) {
            CHECK(w.observe_lane(l).queue == 0);
            CHECK(w.observe_lane(l).segments == std::array<int, 4>{0, 0, 0, 0});
        }
        for (int k = 0; k < 15; ++k) w.step();
        const VehicleState& v = w.vehicles()[0];
        CHECK(v.distance == 250.0);
        CHECK(w.observe_lane(v.lane).segments == std::array<int, 4>{0, 0, 1, 0});
        for (int k = 0; k < 20; ++k) w.step();
        CHECK(v.distance == 50.0);
        CHECK(w.observe_lane(v.lane).segments == std::array<int, 4>{1, 0, 0, 0});
    }
    {
        const Network net = build_grid(1, 1, Topology::A, 300, 300);
        FlowSet flow;
        for (int k = 0; k < 60; ++k)
            flow.vehicles.push_back({"v" + std::to_string(100 + k), k, {*net.find_road(kWestEast[0]), *net.find_road(kWestEast[1])}});
        World w(net, flow);
        w.set_phase(0, 0);
        for (int k = 0; k < 80; ++k) {
            w.step();
            for (LaneIndex l : net.intersection(0).incoming_lanes) CHECK(w.observe_lane(l).segments[3] == 0);
        }
        // The queue backs past 300 m and stacks at the entrance.
        LaneIndex lane = w.vehicles()[0].lane;
        CHECK(w.observe_lane(lane).segments[2] > 0);
    }
}

TEST_CASE("headway limits discharge to one vehicle per two seconds per lane") {
    const Network net = build_grid(1, 1, Topology::A, 200, 200);
    FlowSet flow;
    for (int k = 0; k < 10; ++k)
        flow.vehicles.push_back({"v" + std::to_string(k), 0, {*net.find_road(kWestEast[0]), *net.find_road(kWestEast[1])}});
    World w(net, flow);
    w.set_phase(0, (phase_serving(net, 0, kWestEast[0], kWestEast[1]) + 2) % 4);
    for (int k = 0; k < 120; ++k) w.step();
    // All ten wait in a single lane, stacked 7.5 m apart.
    const auto& lane = w.lane_vehicles(w.vehicles()[0].lane);
    REQUIRE(lane.size() == 10);
    for (std::size_t k = 0; k < lane.size(); ++k) CHECK(w.vehicles()[lane[k]].distance == doctest::Approx(7.5 * k));
    w.set_phase(0, phase_serving(net, 0, kWestEast[0], kWestEast[1]));
    for (int k = 0; k < 5; ++k) w.step();
    std::vector<std::size_t> on_exit;
    for (int k = 0; k < 20; ++k) {
        w.step();
        std::size_t moved = 0;
        for (const VehicleState& v : w.vehicles()) moved += v.route_pos;
        on_exit.push_back(moved);
    }
    for (std::size_t k = 0; k < on_exit.size(); ++k) CHECK(on_exit[k] == k / 2 + 1);
}

TEST_CASE("zero flow gives an empty log with zero queues") {
    const Network net = build_grid(2, 2, Topology::B, 300, 300);
    const FlowSet flow;
    CycleController c(20);
    EpisodeOptions opt;
    opt.horizon = 300;
    opt.drain = true;
    const EpisodeLog log = run_episode(net, flow, c, opt);
    CHECK(log.vehicles.empty());
    CHECK(log.steps.size() == 300);
    for (const StepRecord& s : log.steps)
        for (int q : s.queues) CHECK(q == 0);
}

TEST_CASE("starving an approach times out the drain") {
    const Network net = build_grid(1, 1, Topology::A, 200, 200);
    const FlowSet flow = one_vehicle(net, kWestEast);
    HoldController hold((phase_serving(net, 0, kWestEast[0], kWestEast[1]) + 1) % 4);
    EpisodeOptions opt;
    opt.horizon = 100;
    opt.drain = true;
    CHECK_THROWS_AS(run_episode(net, flow, hold, opt), DrainTimeout);
}

TEST_CASE("conservation, free-flow bound and determinism on a loaded grid") {
    const Network net = build_grid(3, 4, Topology::A, 400, 800);
    const FlowSet flow = generate_flow(net, 0.08, {}, 1200, 5);
    CycleController c(25);
    EpisodeOptions opt;
    opt.horizon = 1200;
    opt.drain = true;
    const EpisodeLog a = run_episode(net, flow, c, opt);
    const EpisodeLog b = run_episode(net, flow, c, opt);
    CHECK(a.serialize() == b.serialize());
    std::size_t pending = flow.vehicles.size();
    for (const StepRecord& s : a.steps) CHECK(s.injected == s.in_network + s.exited);
    CHECK(a.steps.back().exited == pending);
    REQUIRE(a.vehicles.size() == flow.vehicles.size());
    for (std::size_t k = 0; k < a.vehicles.size(); ++k) {
        const VehicleRecord& v = a.vehicles[k];
        REQUIRE(v.exit_time);
        const VehicleSpec* spec = nullptr;
        for (const VehicleSpec& s : flow.vehicles)
            if (s.id == v.id) spec = &s;
        REQUIRE(spec);
        CHECK(*v.exit_time - v.enter_time >= route_length(net, spec->route) / 10.0);
    }
}

TEST_CASE("queues on lanes that lost their green do not shrink during yellow") {
    const Network net = build_grid(1, 1, Topology::A, 300, 300);
    const FlowSet flow = generate_flow(net, 0.15, {}, 900, 9);
    World w(net, flow);
    const Intersection& inter = net.intersection(0);
    int phase = 0;
    w.set_phase(0, phase);
    for (int cycle = 0; cycle < 20; ++cycle) {
        for (int k = 0; k < 20; ++k) w.step();
        phase = (phase + 1) % 4;
        REQUIRE(w.set_phase(0, phase));
        std::vector<int> before;
        for (LaneIndex l : inter.incoming_lanes) before.push_back(w.observe_lane(l).queue);
        for (int k = 0; k < 5; ++k) {
            w.step();
            for (std::size_t j = 0; j < inter.incoming_lanes.size(); ++j) {
                const Lane& lane = net.lane(inter.incoming_lanes[j]);
                if (lane.serves(TurnKind::Right)) continue;
                const int q = w.observe_lane(inter.incoming_lanes[j]).queue;
                CHECK(q >= before[j]);
                before[j] = q;
            }
        }
    }
}
