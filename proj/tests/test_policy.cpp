#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "tsc/agent.hpp"
#include "tsc/errors.hpp"
#include "tsc/policy.hpp"
#include "oracles.hpp"

using namespace tsc;
using namespace tsc::testing;

TEST_CASE("max queue phase examples") {
    Intersection inter;
    for (int p = 0; p < 4; ++p) inter.phases.push_back({p, {}, {static_cast<LaneIndex>(p)}});
    CHECK(max_queue_phase(inter, {{0, 5}, {1, 2}, {2, 7}, {3, 1}}) == 2);
    CHECK(max_queue_phase(inter, {{0, 0}, {1, 0}, {2, 0}, {3, 0}}) == 0);
    CHECK_THROWS_AS(max_queue_phase(inter, {{0, 5}, {1, 2}, {3, 1}}), MissingLane);
}

TEST_CASE("max queue phase matches enumeration on random instances") {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n = 0;
        const Intersection inter = random_intersection(rng, n);
        std::vector<LaneIndex> all(n);
        for (LaneIndex l = 0; l < n; ++l) all[l] = l;
        QueueMap q = random_queues(all, rng);
        std::vector<double> sums;
        for (const Phase& p : inter.phases) {
            double s = 0.0;
            for (LaneIndex l : p.participating_lanes) s += q.at(l);
            sums.push_back(s);
        }
        const int chosen = max_queue_phase(inter, q);
        REQUIRE(chosen == brute_argmax(sums));

        // Scaling keeps the choice, and lanes outside every phase do not matter.
        QueueMap scaled = q;
        const double lambda = std::ldexp(1.0, static_cast<int>(uniform_index(rng, 9)) - 4); // exact scaling keeps ties
        for (auto& [l, v] : scaled) v *= lambda;
        scaled[1000] = 99.0;
        CHECK(max_queue_phase(inter, scaled) == chosen);
    }
}

TEST_CASE("efficient pressure examples") {
    const Network net = build_grid(1, 1, Topology::A, 300, 300);
    QueueMap q;
    for (LaneIndex l : net.intersection(0).incoming_lanes) q[l] = 3.0;
    for (LaneIndex l : net.intersection(0).outgoing_lanes) q[l] = 3.0;
    CHECK(efficient_pressure_phase(net, 0, q) == 0);
    for (double s : efficient_pressure_scores(net, 0, q)) CHECK(s == 0.0);
    CHECK(pressure_reward(net, 0, q) == 0.0);

    for (auto& [l, v] : q) v = 0.0;
    // A left turn appears only in the left-turn phases.
    const Intersection& inter = net.intersection(0);
    std::size_t left = 0;
    while (inter.movements[left].kind != TurnKind::Left) ++left;
    q[inter.movements[left].from_lanes[0]] = 6.0;
    const int winner = efficient_pressure_phase(net, 0, q);
    const auto& ms = inter.phases[static_cast<std::size_t>(winner)].movements;
    CHECK(std::find(ms.begin(), ms.end(), left) != ms.end());

    q.erase(inter.outgoing_lanes[0]);
    CHECK_THROWS_AS(efficient_pressure_phase(net, 0, q), MissingLane);
}

TEST_CASE("efficient pressure phase matches enumeration on random instances") {
    Rng rng(12);
    const std::vector<Network> nets = preset_grids();
    for (int trial = 0; trial < 1000; ++trial) {
        const Network& net = nets[static_cast<std::size_t>(trial) % nets.size()];
        const IntersectionIndex i = uniform_index(rng, net.intersections().size());
        QueueMap q = queues_for(net, i, rng);
        const std::vector<double> want = brute_pressure_scores(net, i, q);
        const std::vector<double> got = efficient_pressure_scores(net, i, q);
        REQUIRE(got.size() == want.size());
        for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
        const int chosen = efficient_pressure_phase(net, i, q);
        REQUIRE(chosen == brute_argmax(want));

        for (auto& [l, v] : q) v *= 4.0;
        CHECK(efficient_pressure_phase(net, i, q) == chosen);
    }
}

TEST_CASE("pressure rewards") {
    const Network net = build_grid(1, 1, Topology::A, 300, 300);
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const QueueMap q = queues_for(net, 0, rng);
        double total = 0.0, absolute = 0.0;
        for (const Movement& m : net.intersection(0).movements) {
            const double p = efficient_pressure(net, m, q);
            total += p;
            absolute += std::abs(p);
        }
        CHECK(pressure_reward(net, 0, q) == doctest::Approx(-std::abs(total)));
        CHECK(pressure_reward(net, 0, q, true) == doctest::Approx(-absolute));
        CHECK(pressure_reward(net, 0, q, true) <= pressure_reward(net, 0, q));
    }
    QueueMap q{{0, 3}, {1, 2}, {2, 0}, {3, 1}};
    Intersection inter;
    inter.incoming_lanes = {0, 1, 2, 3};
    CHECK(queue_reward(inter, q) == -6.0);
}

TEST_CASE("max state value phase") {
    Matrix q = Matrix::Zero(4, 7);
    CHECK(max_state_value_phase(q) == 0);
    q(3, 5) = 2.0;
    q(1, 0) = 1.5;
    CHECK(max_state_value_phase(q) == 3);

    Rng rng(14);
    for (int trial = 0; trial < 1000; ++trial) {
        Matrix m(static_cast<Eigen::Index>(1 + uniform_index(rng, 4)), 7);
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<double>(uniform_index(rng, 5));
        std::vector<double> values;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            double best = m(r, 0);
            for (Eigen::Index c = 1; c < 7; ++c) best = std::max(best, m(r, c));
            values.push_back(best);
        }
        REQUIRE(max_state_value_phase(m) == brute_argmax(values));
    }
}

TEST_CASE("cyclic order") {
    CHECK(cyclic_next(3, 4) == 0);
    CHECK(cyclic_next(0, 3) == 1);
    CHECK(cyclic_next(-1, 3) == 0);
    CHECK_THROWS_AS(cyclic_next(0, 0), InvalidPhase);
    std::map<int, int> visits;
    int p = -1;
    for (int k = 0; k < 4 * 25; ++k) visits[p = cyclic_next(p, 4)]++;
    for (int q = 0; q < 4; ++q) CHECK(visits[q] == 25);
}

TEST_CASE("fixed time controller has period 140 s with 30 s splits") {
    const Network net = build_grid(2, 2, Topology::A, 300, 300);
    const FlowSet flow = generate_flow(net, 0.05, {}, 1000, 3);
    auto ctrl = make_fixed_time({30});
    const EpisodeLog log = run_episode(net, flow, *ctrl, {1000, false, {}});
    for (IntersectionIndex i = 0; i < net.intersections().size(); ++i) {
        std::vector<DecisionRecord> ds;
        for (const DecisionRecord& d : log.decisions)
            if (d.intersection == i) ds.push_back(d);
        REQUIRE(ds.size() > 8);
        CHECK(ds[0].time == 0);
        for (std::size_t k = 0; k < ds.size(); ++k) {
            CHECK(ds[k].phase == static_cast<int>(k % 4));
            CHECK(ds[k].duration == 30);
            if (k >= 5) CHECK(ds[k].time - ds[k - 4].time == 140);
            if (k >= 1) CHECK(ds[k].time - ds[k - 1].time == (k == 1 ? 30 : 35));
        }
    }
    CHECK_THROWS_AS(make_fixed_time({30, 0}), ConfigError);
    CHECK_THROWS_AS(make_max_queue(0), ConfigError);
}

namespace {

// Alternates 10 s and 15 s per intersection parity to exercise independence.
class ParityDuration : public DurationPolicy {
public:
    int choose_duration(const World&, IntersectionIndex i, int) override { return i % 2 ? 15 : 10; }
};

// Replays the decision log: each gap equals the previous duration, plus the
// yellow when that previous decision changed the phase.
void check_decision_gaps(const EpisodeLog& log, std::size_t intersections, int yellow) {
    for (IntersectionIndex i = 0; i < intersections; ++i) {
        const DecisionRecord* prev = nullptr;
        bool prev_changed = false;
        for (const DecisionRecord& d : log.decisions) {
            if (d.intersection != i) continue;
            CHECK(std::binary_search(kDurationSpace.begin(), kDurationSpace.end(), d.duration));
            if (prev) CHECK(d.time - prev->time == prev->duration + (prev_changed ? yellow : 0));
            prev_changed = prev && d.phase != prev->phase;
            prev = &d;
        }
    }
}

} // namespace

TEST_CASE("two-stage controller timing matches the log") {
    const Network net = build_grid(3, 4, Topology::A, 400, 800);
    const FlowSet flow = generate_flow(net, 0.12, {}, 1800, 4);
    for (int d : {10, 15, 40}) {
        auto ctrl = make_max_queue(d);
        const EpisodeLog log = run_episode(net, flow, *ctrl, {1800, true, {}});
        check_decision_gaps(log, net.intersections().size(), 5);
    }
    auto mp = make_efficient_pressure(15);
    check_decision_gaps(run_episode(net, flow, *mp, {1800, true, {}}), net.intersections().size(), 5);

    TwoStageController mixed(std::make_shared<MaxQueuePhase>(), std::make_shared<ParityDuration>());
    const EpisodeLog log = run_episode(net, flow, mixed, {1800, true, {}});
    check_decision_gaps(log, net.intersections().size(), 5);
}
