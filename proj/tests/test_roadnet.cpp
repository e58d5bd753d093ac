#include <doctest.h>

#include <set>

#include "tsc/errors.hpp"
#include "tsc/roadnet.hpp"

using namespace tsc;

namespace {

// Compass arm a road arrives from, read off its direction of travel.
int arrival_arm(const Road& r) {
    const double dx = r.end.x - r.start.x, dy = r.end.y - r.start.y;
    if (std::abs(dx) > std::abs(dy)) return dx > 0 ? 3 : 1; // heading east: came from west
    return dy > 0 ? 2 : 0;                                  // heading north: came from south
}

// Hand-written conflict table for right-hand traffic at a four-way crossing.
// Movements that merge into the same road always conflict. Among non-right
// movements only same-approach pairs, opposing straights and opposing lefts
// can share a green. Free right turns never conflict.
bool table_conflict(const Network& net, const Movement& a, const Movement& b) {
    if (a.always_permitted || b.always_permitted) return false;
    if (a.to_road == b.to_road) return true;
    if (a.kind == TurnKind::Right || b.kind == TurnKind::Right) return false;
    const int arm_a = arrival_arm(net.road(a.from_road));
    const int arm_b = arrival_arm(net.road(b.from_road));
    if (arm_a == arm_b) return false;
    const bool opposing = (arm_a + 2) % 4 == arm_b;
    if (opposing && a.kind == b.kind) return false;
    return true;
}

std::string single_a_document(bool with_bad_phase) {
    nlohmann::json doc = serialize_roadnet(build_grid(1, 1, Topology::A, 300, 300));
    if (with_bad_phase) {
        // Find N-straight and E-straight and put them into phase 0.
        const Network net = build_grid(1, 1, Topology::A, 300, 300);
        std::size_t ns = 0, ew = 0;
        const auto& ms = net.intersection(0).movements;
        for (std::size_t m = 0; m < ms.size(); ++m) {
            if (ms[m].kind != TurnKind::Straight) continue;
            const int arm = arrival_arm(net.road(ms[m].from_road));
            if (arm == 0) ns = m;
            if (arm == 1) ew = m;
        }
        doc["phases"][0]["movements"] = {ns, ew};
    }
    return doc.dump();
}

} // namespace

TEST_CASE("single intersection document of preset A parses with four phases") {
    const Network net = parse_roadnet_text(single_a_document(false));
    REQUIRE(net.intersections().size() == 1);
    const Intersection& inter = net.intersection(0);
    CHECK(inter.phases.size() == 4);
    CHECK(inter.movements.size() == 12);
    CHECK(inter.incoming_lanes.size() == 12);
    CHECK(inter.outgoing_lanes.size() == 4);
    for (const Phase& p : inter.phases) {
        for (std::size_t a : p.movements)
            for (std::size_t b : p.movements)
                if (a != b) CHECK_FALSE(table_conflict(net, inter.movements[a], inter.movements[b]));
    }
}

TEST_CASE("crossing straights in one phase are rejected") {
    CHECK_THROWS_AS(parse_roadnet_text(single_a_document(true)), TopologyError);
}

TEST_CASE("empty intersection list is a schema error") {
    nlohmann::json doc = serialize_roadnet(build_grid(1, 1, Topology::A, 300, 300));
    doc["intersections"] = nlohmann::json::array();
    CHECK_THROWS_AS(parse_roadnet(doc), SchemaError);
    CHECK_THROWS_AS(parse_roadnet_text("{not json"), SchemaError);
    nlohmann::json missing = serialize_roadnet(build_grid(1, 1, Topology::A, 300, 300));
    missing["lanes"][0].erase("length");
    CHECK_THROWS_AS(parse_roadnet(missing), SchemaError);
}

TEST_CASE("dangling lane and disconnected graph are topology errors") {
    nlohmann::json doc = serialize_roadnet(build_grid(1, 1, Topology::A, 300, 300));
    doc["lanes"][0]["road"] = "no_such_road";
    CHECK_THROWS_AS(parse_roadnet(doc), TopologyError);

    // Two separate single-intersection grids glued into one document.
    nlohmann::json a = serialize_roadnet(build_grid(1, 1, Topology::D, 300, 300));
    nlohmann::json b = a;
    auto rename = [](nlohmann::json& j) {
        std::string s = j.dump();
        for (std::string key : {"intersection_", "road_"}) {
            std::size_t pos = 0;
            while ((pos = s.find("\"" + key, pos)) != std::string::npos) {
                s.insert(pos + 1, "b");
                pos += key.size() + 2;
            }
        }
        j = nlohmann::json::parse(s);
    };
    rename(b);
    for (const char* key : {"intersections", "roads", "lanes", "phases"})
        for (auto& item : b[key]) a[key].push_back(item);
    CHECK_THROWS_AS(parse_roadnet(a), TopologyError);
}

TEST_CASE("grid sizes") {
    const Network jinan = build_grid(3, 4, Topology::A, 400, 800);
    CHECK(jinan.intersections().size() == 12);
    CHECK(jinan.roads().size() == 2 * (3 * (4 + 1) + 4 * (3 + 1)));
    const Network hangzhou = build_grid(4, 4, Topology::A, 800, 600);
    CHECK(hangzhou.intersections().size() == 16);
    CHECK(hangzhou.roads().size() == 2 * (4 * 5 + 4 * 5));
    const Network t = build_grid(1, 1, Topology::C, 400, 400);
    CHECK(t.intersections().size() == 1);
    CHECK(t.intersection(0).phases.size() == 3);
    CHECK(t.roads().size() == 6);

    for (int rows = 1; rows <= 4; ++rows)
        for (int cols = 1; cols <= 4; ++cols)
            for (Topology p : {Topology::A, Topology::B, Topology::D}) {
                const Network n = build_grid(rows, cols, p, 300, 200);
                CHECK(n.intersections().size() == static_cast<std::size_t>(rows * cols));
                CHECK(n.roads().size() == static_cast<std::size_t>(2 * (rows * (cols + 1) + cols * (rows + 1))));
                for (RoadIndex r = 0; r < n.roads().size(); ++r) {
                    const Road& road = n.road(r);
                    CHECK(road.length == doctest::Approx(std::hypot(road.end.x - road.start.x, road.end.y - road.start.y)));
                }
            }
}

TEST_CASE("three-arm grids stay connected") {
    for (int rows = 1; rows <= 4; ++rows)
        for (int cols = 1; cols <= 5; ++cols) {
            const Network n = build_grid(rows, cols, Topology::C, 300, 300);
            CHECK(n.intersections().size() == static_cast<std::size_t>(rows * cols));
            for (const Intersection& inter : n.intersections()) CHECK(inter.phases.size() == 3);
        }
}

TEST_CASE("preset phase tables never pair conflicting movements") {
    for (bool signalized : {false, true}) {
        for (Topology p : {Topology::A, Topology::B, Topology::C, Topology::D}) {
            Network net = build_grid(2, 3, p, 300, 300);
            if (signalized) {
                nlohmann::json doc = serialize_roadnet(net);
                doc["signalized_right_turns"] = true;
                // Every right turn joins every phase it is compatible with.
                Network probe = parse_roadnet_text(serialize_roadnet_text(net));
                for (auto& jp : doc["phases"]) {
                    const auto i = *probe.find_intersection(jp["intersection"].get<std::string>());
                    const Intersection& inter = probe.intersection(i);
                    const std::vector<std::size_t> base = jp["movements"].get<std::vector<std::size_t>>();
                    std::vector<std::size_t> extended = base;
                    for (std::size_t m = 0; m < inter.movements.size(); ++m) {
                        if (inter.movements[m].kind != TurnKind::Right) continue;
                        bool ok = true;
                        for (std::size_t b : base) {
                            Movement x = inter.movements[m], y = inter.movements[b];
                            x.always_permitted = y.always_permitted = false;
                            if (table_conflict(probe, x, y)) ok = false;
                        }
                        if (ok) extended.push_back(m);
                    }
                    jp["movements"] = extended;
                }
                net = parse_roadnet(doc);
            }
            for (IntersectionIndex i = 0; i < net.intersections().size(); ++i) {
                const Intersection& inter = net.intersection(i);
                for (std::size_t a = 0; a < inter.movements.size(); ++a)
                    for (std::size_t b = 0; b < inter.movements.size(); ++b)
                        if (a != b)
                            CHECK(movements_conflict(net, i, a, b) ==
                                  table_conflict(net, inter.movements[a], inter.movements[b]));
                std::set<std::size_t> covered;
                for (const Phase& ph : inter.phases) {
                    CHECK_FALSE(ph.participating_lanes.empty());
                    for (std::size_t m : ph.movements) covered.insert(m);
                    for (LaneIndex l : ph.participating_lanes) CHECK(l < net.lanes().size());
                }
                for (std::size_t m = 0; m < inter.movements.size(); ++m)
                    if (inter.movements[m].kind != TurnKind::Right) CHECK(covered.count(m) == 1);
            }
        }
    }
}

TEST_CASE("presets differ in lane counts or phase counts") {
    std::set<std::pair<std::size_t, std::size_t>> shapes;
    for (Topology p : {Topology::A, Topology::B, Topology::C, Topology::D}) {
        const Network n = build_grid(1, 1, p, 300, 300);
        shapes.insert({n.intersection(0).incoming_lanes.size(), n.intersection(0).phases.size()});
    }
    CHECK(shapes.size() == 4);
    CHECK(preset_phase_table(Topology::A).size() == 4);
    CHECK(preset_phase_table(Topology::B).size() == 4);
    CHECK(preset_phase_table(Topology::C).size() == 3);
    CHECK(preset_phase_table(Topology::D).size() == 4);
    CHECK_THROWS_AS(topology_from_string("E"), UnknownPreset);
}

TEST_CASE("serialization round trip is field-equal and byte-stable") {
    for (Topology p : {Topology::A, Topology::B, Topology::C, Topology::D}) {
        const Network net = build_grid(3, 2, p, 350.5, 420.25);
        const std::string text = serialize_roadnet_text(net);
        const Network back = parse_roadnet_text(text);
        CHECK(back == net);
        CHECK(serialize_roadnet_text(back) == text);
    }
}
