#include <fstream>
#include <sstream>

#include "tsc/errors.hpp"
#include "tsc/roadnet.hpp"

namespace tsc {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "tsc-roadnet";
constexpr int kVersion = 1;

const json& field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) throw SchemaError(where + " must be an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(where + " is missing field '" + key + "'");
    return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& where) {
    const json& v = field(obj, key, where);
    if (!v.is_string()) throw SchemaError(where + "." + key + " must be a string");
    return v.get<std::string>();
}

double get_number(const json& obj, const char* key, const std::string& where) {
    const json& v = field(obj, key, where);
    if (!v.is_number()) throw SchemaError(where + "." + key + " must be a number");
    return v.get<double>();
}

long long get_integer(const json& obj, const char* key, const std::string& where) {
    const json& v = field(obj, key, where);
    if (!v.is_number_integer()) throw SchemaError(where + "." + key + " must be an integer");
    return v.get<long long>();
}

const json& get_array(const json& obj, const char* key, const std::string& where) {
    const json& v = field(obj, key, where);
    if (!v.is_array()) throw SchemaError(where + "." + key + " must be an array");
    return v;
}

Point get_point(const json& obj, const char* key, const std::string& where) {
    const json& v = field(obj, key, where);
    const std::string sub = where + "." + key;
    return {get_number(v, "x", sub), get_number(v, "y", sub)};
}

json point_json(const Point& p) { return json{{"x", p.x}, {"y", p.y}}; }

template <typename Lookup>
std::size_t resolve(const Lookup& ids, const std::string& id, const std::string& what) {
    auto it = ids.find(id);
    if (it == ids.end()) throw TopologyError("reference to missing " + what + " '" + id + "'");
    return it->second;
}

} // namespace

Network parse_roadnet(const json& doc) {
    if (!doc.is_object()) throw SchemaError("road network document must be an object");
    if (auto it = doc.find("format"); it != doc.end() && *it != kFormat)
        throw SchemaError("unsupported road network format");
    if (auto it = doc.find("version"); it != doc.end() && *it != kVersion)
        throw SchemaError("unsupported road network version");

    NetworkParts parts;
    if (auto it = doc.find("signalized_right_turns"); it != doc.end()) {
        if (!it->is_boolean()) throw SchemaError("signalized_right_turns must be a boolean");
        parts.signalized_right_turns = it->get<bool>();
    }

    const json& inters = get_array(doc, "intersections", "document");
    const json& roads = get_array(doc, "roads", "document");
    const json& lanes = get_array(doc, "lanes", "document");
    const json& phases = get_array(doc, "phases", "document");
    if (inters.empty()) throw SchemaError("road network has no intersections");

    std::unordered_map<std::string, std::size_t> inter_ids, road_ids, lane_ids;
    auto register_id = [](auto& map, const std::string& id, std::size_t idx, const char* what) {
        if (!map.emplace(id, idx).second) throw SchemaError(std::string("duplicate ") + what + " id '" + id + "'");
    };
    for (std::size_t i = 0; i < inters.size(); ++i)
        register_id(inter_ids, get_string(inters[i], "id", "intersection"), i, "intersection");
    for (std::size_t i = 0; i < roads.size(); ++i) register_id(road_ids, get_string(roads[i], "id", "road"), i, "road");
    for (std::size_t i = 0; i < lanes.size(); ++i) register_id(lane_ids, get_string(lanes[i], "id", "lane"), i, "lane");

    for (const json& jl : lanes) {
        Lane lane;
        lane.id = get_string(jl, "id", "lane");
        const std::string where = "lane '" + lane.id + "'";
        lane.road = resolve(road_ids, get_string(jl, "road", where), "road");
        lane.length = get_number(jl, "length", where);
        for (const json& k : get_array(jl, "movement_kinds", where)) {
            if (!k.is_string()) throw SchemaError(where + " movement kind must be a string");
            lane.movement_kinds.push_back(turn_kind_from_string(k.get<std::string>()));
        }
        lane.position_index = static_cast<int>(get_integer(jl, "position_index", where));
        parts.lanes.push_back(std::move(lane));
    }

    auto optional_inter = [&](const json& jr, const char* key, const std::string& where) -> std::optional<std::size_t> {
        const json& v = field(jr, key, where);
        if (v.is_null()) return std::nullopt;
        if (!v.is_string()) throw SchemaError(where + "." + key + " must be a string or null");
        return resolve(inter_ids, v.get<std::string>(), "intersection");
    };
    for (const json& jr : roads) {
        Road road;
        road.id = get_string(jr, "id", "road");
        const std::string where = "road '" + road.id + "'";
        road.from = optional_inter(jr, "from", where);
        road.to = optional_inter(jr, "to", where);
        road.start = get_point(jr, "start", where);
        road.end = get_point(jr, "end", where);
        road.length = get_number(jr, "length", where);
        for (const json& l : get_array(jr, "lanes", where)) {
            if (!l.is_string()) throw SchemaError(where + " lane reference must be a string");
            road.lanes.push_back(resolve(lane_ids, l.get<std::string>(), "lane"));
        }
        parts.roads.push_back(std::move(road));
    }

    for (const json& ji : inters) {
        Intersection inter;
        inter.id = get_string(ji, "id", "intersection");
        const std::string where = "intersection '" + inter.id + "'";
        inter.point = get_point(ji, "point", where);
        inter.topology = topology_from_string(get_string(ji, "topology", where));
        for (const json& jm : get_array(ji, "movements", where)) {
            Movement m;
            for (const json& l : get_array(jm, "from_lanes", where + " movement")) {
                if (!l.is_string()) throw SchemaError(where + " movement lane must be a string");
                m.from_lanes.push_back(resolve(lane_ids, l.get<std::string>(), "lane"));
            }
            if (m.from_lanes.empty()) throw SchemaError(where + " movement has no lanes");
            m.from_road = parts.lanes[m.from_lanes.front()].road;
            for (LaneIndex l : m.from_lanes) {
                if (parts.lanes[l].road != m.from_road)
                    throw TopologyError(where + " movement lanes span several roads");
            }
            m.to_road = resolve(road_ids, get_string(jm, "to_road", where + " movement"), "road");
            m.kind = turn_kind_from_string(get_string(jm, "kind", where + " movement"));
            inter.movements.push_back(std::move(m));
        }
        parts.intersections.push_back(std::move(inter));
    }

    for (const json& jp : phases) {
        const std::string owner = get_string(jp, "intersection", "phase");
        Intersection& inter = parts.intersections[resolve(inter_ids, owner, "intersection")];
        Phase phase;
        phase.index = static_cast<int>(get_integer(jp, "index", "phase of '" + owner + "'"));
        for (const json& m : get_array(jp, "movements", "phase of '" + owner + "'")) {
            if (!m.is_number_integer() || m.get<long long>() < 0)
                throw SchemaError("phase movement reference must be a non-negative integer");
            phase.movements.push_back(m.get<std::size_t>());
        }
        inter.phases.push_back(std::move(phase));
    }

    return Network::build(std::move(parts));
}

Network parse_roadnet_text(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("road network is not valid JSON: ") + e.what());
    }
    return parse_roadnet(doc);
}

json serialize_roadnet(const Network& net) {
    json doc;
    doc["format"] = kFormat;
    doc["version"] = kVersion;
    doc["signalized_right_turns"] = net.signalized_right_turns();

    json inters = json::array(), phases = json::array();
    for (const Intersection& inter : net.intersections()) {
        json movements = json::array();
        for (const Movement& m : inter.movements) {
            json lanes = json::array();
            for (LaneIndex l : m.from_lanes) lanes.push_back(net.lane(l).id);
            movements.push_back({{"from_lanes", lanes}, {"to_road", net.road(m.to_road).id},
                                 {"kind", std::string(to_string(m.kind))}});
        }
        inters.push_back({{"id", inter.id},
                          {"point", point_json(inter.point)},
                          {"topology", std::string(1, to_char(inter.topology))},
                          {"movements", movements}});
        for (const Phase& phase : inter.phases) {
            phases.push_back({{"intersection", inter.id}, {"index", phase.index}, {"movements", phase.movements}});
        }
    }

    json roads = json::array();
    for (const Road& road : net.roads()) {
        json lanes = json::array();
        for (LaneIndex l : road.lanes) lanes.push_back(net.lane(l).id);
        roads.push_back({{"id", road.id},
                         {"from", road.from ? json(net.intersection(*road.from).id) : json(nullptr)},
                         {"to", road.to ? json(net.intersection(*road.to).id) : json(nullptr)},
                         {"start", point_json(road.start)},
                         {"end", point_json(road.end)},
                         {"length", road.length},
                         {"lanes", lanes}});
    }

    json lanes = json::array();
    for (const Lane& lane : net.lanes()) {
        json kinds = json::array();
        for (TurnKind k : lane.movement_kinds) kinds.push_back(std::string(to_string(k)));
        lanes.push_back({{"id", lane.id},
                         {"road", net.road(lane.road).id},
                         {"length", lane.length},
                         {"movement_kinds", kinds},
                         {"position_index", lane.position_index}});
    }

    doc["intersections"] = std::move(inters);
    doc["roads"] = std::move(roads);
    doc["lanes"] = std::move(lanes);
    doc["phases"] = std::move(phases);
    return doc;
}

std::string serialize_roadnet_text(const Network& net) { return serialize_roadnet(net).dump(1) + "\n"; }

Network load_roadnet_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open road network file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_roadnet_text(buf.str());
}

void save_roadnet_file(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write road network file '" + path + "'");
    out << serialize_roadnet_text(net);
}

} // namespace tsc
