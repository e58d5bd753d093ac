#include "tsc/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "tsc/errors.hpp"
#include "tsc/random.hpp"

namespace tsc {

using nlohmann::json;

void TurnRatios::validate() const {
    if (!(left >= 0.0) || !(straight >= 0.0) || !(right >= 0.0))
        throw ConfigError("turn ratios must be non-negative");
    if (std::abs(left + straight + right - 1.0) > 1e-9) throw ConfigError("turn ratios must sum to 1");
}

double TurnRatios::of(TurnKind kind) const {
    switch (kind) {
    case TurnKind::Left: return left;
    case TurnKind::Straight: return straight;
    case TurnKind::Right: return right;
    }
    return 0.0;
}

namespace {

std::vector<double> arrivals(double rate, double horizon, std::mt19937_64& rng) {
    std::vector<double> times;
    if (rate <= 0.0) return times;
    double t = 0.0;
    while (true) {
        t += -std::log1p(-uniform01(rng)) / rate;
        if (t >= horizon) break;
        times.push_back(t);
    }
    return times;
}

std::vector<RoadIndex> sample_route(const Network& net, RoadIndex entry, const TurnRatios& ratios,
                                    std::mt19937_64& rng) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<RoadIndex> route{entry};
        std::unordered_set<IntersectionIndex> visited;
        bool stuck = false;
        while (!stuck) {
            const Road& road = net.road(route.back());
            if (!road.to) return route;
            const IntersectionIndex i = *road.to;
            visited.insert(i);
            std::vector<const Movement*> feasible;
            for (const Movement& m : net.intersection(i).movements) {
                if (m.from_road != route.back()) continue;
                const auto& next = net.road(m.to_road).to;
                if (next && visited.count(*next)) continue;
                feasible.push_back(&m);
            }
            if (feasible.empty()) {
                stuck = true;
                break;
            }
            double total = 0.0;
            for (const Movement* m : feasible) total += ratios.of(m->kind);
            const Movement* pick = feasible.back();
            if (total > 0.0) {
                double u = uniform01(rng) * total;
                for (const Movement* m : feasible) {
                    const double w = ratios.of(m->kind);
                    if (w <= 0.0) continue;
                    pick = m;
                    if (u < w) break;
                    u -= w;
                }
            } else {
                pick = feasible[uniform_index(rng, feasible.size())];
            }
            route.push_back(pick->to_road);
        }
    }
    throw RouteError("no loop-free route from road '" + net.road(entry).id + "'");
}

std::string vehicle_id(std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "veh_%06zu", n);
    return buf;
}

void sort_flow(std::vector<VehicleSpec>& v) {
    std::stable_sort(v.begin(), v.end(), [](const VehicleSpec& a, const VehicleSpec& b) {
        if (a.start_time != b.start_time) return a.start_time < b.start_time;
        return a.id < b.id;
    });
}

} // namespace

std::vector<double> poisson_arrivals(double rate, double horizon, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return arrivals(rate, horizon, rng);
}

double route_length(const Network& net, const std::vector<RoadIndex>& route) {
    double total = 0.0;
    for (RoadIndex r : route) total += net.road(r).length;
    return total;
}

void validate_route(const Network& net, const std::vector<RoadIndex>& route) {
    if (route.empty()) throw RouteError("empty route");
    if (!net.road(route.front()).is_entry())
        throw RouteError("route starts on '" + net.road(route.front()).id + "' which is not an entry road");
    if (!net.road(route.back()).is_exit())
        throw RouteError("route ends on '" + net.road(route.back()).id + "' which is not an exit road");
    for (std::size_t k = 0; k + 1 < route.size(); ++k) {
        const Road& a = net.road(route[k]);
        if (!a.to || !net.find_movement(*a.to, route[k], route[k + 1]))
            throw RouteError("roads '" + a.id + "' and '" + net.road(route[k + 1]).id + "' are not connected");
    }
}

FlowSet generate_flow(const Network& net, double arrival_rate, const TurnRatios& ratios, double horizon,
                      std::uint64_t seed) {
    if (!(horizon > 0.0)) throw ConfigError("flow horizon must be positive");
    if (!(arrival_rate >= 0.0)) throw ConfigError("arrival rate must be non-negative");
    ratios.validate();

    struct Pending {
        double time;
        std::size_t entry;
        std::vector<RoadIndex> route;
    };
    std::vector<Pending> pending;
    const auto& entries = net.entry_roads();
    for (std::size_t e = 0; e < entries.size(); ++e) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(e)};
        std::mt19937_64 rng(seq);
        for (double t : arrivals(arrival_rate, horizon, rng))
            pending.push_back({t, e, sample_route(net, entries[e], ratios, rng)});
    }
    std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
        return a.time != b.time ? a.time < b.time : a.entry < b.entry;
    });

    FlowSet flow;
    flow.vehicles.reserve(pending.size());
    for (std::size_t n = 0; n < pending.size(); ++n) {
        flow.vehicles.push_back(
            {vehicle_id(n), static_cast<long long>(std::floor(pending[n].time)), std::move(pending[n].route)});
    }
    return flow;
}

FlowSet parse_flow(const json& doc, const Network& net) {
    if (!doc.is_array()) throw SchemaError("flow document must be an array");
    FlowSet flow;
    std::unordered_set<std::string> ids;
    for (const json& rec : doc) {
        if (!rec.is_object()) throw SchemaError("flow record must be an object");
        VehicleSpec v;
        auto id = rec.find("id");
        if (id == rec.end() || !id->is_string() || id->get<std::string>().empty())
            throw SchemaError("flow record needs a string id");
        v.id = id->get<std::string>();
        if (!ids.insert(v.id).second) throw SchemaError("duplicate vehicle id '" + v.id + "'");
        auto st = rec.find("start_time");
        if (st == rec.end() || !st->is_number_integer() || st->get<long long>() < 0)
            throw SchemaError("vehicle '" + v.id + "' needs a non-negative integer start_time");
        v.start_time = st->get<long long>();
        auto route = rec.find("route");
        if (route == rec.end() || !route->is_array() || route->empty())
            throw SchemaError("vehicle '" + v.id + "' needs a non-empty route");
        for (const json& r : *route) {
            if (!r.is_string()) throw SchemaError("vehicle '" + v.id + "' route entries must be road ids");
            auto idx = net.find_road(r.get<std::string>());
            if (!idx) throw RouteError("vehicle '" + v.id + "' uses unknown road '" + r.get<std::string>() + "'");
            v.route.push_back(*idx);
        }
        try {
            validate_route(net, v.route);
        } catch (const RouteError& e) {
            throw RouteError("vehicle '" + v.id + "': " + e.what());
        }
        flow.vehicles.push_back(std::move(v));
    }
    sort_flow(flow.vehicles);
    return flow;
}

FlowSet parse_flow_text(std::string_view text, const Network& net) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("flow is not valid JSON: ") + e.what());
    }
    return parse_flow(doc, net);
}

json serialize_flow(const FlowSet& flow, const Network& net) {
    json doc = json::array();
    for (const VehicleSpec& v : flow.vehicles) {
        json route = json::array();
        for (RoadIndex r : v.route) route.push_back(net.road(r).id);
        doc.push_back({{"id", v.id}, {"start_time", v.start_time}, {"route", route}});
    }
    return doc;
}

std::string serialize_flow_text(const FlowSet& flow, const Network& net) {
    const json doc = serialize_flow(flow, net);
    std::string out = "[\n";
    for (std::size_t k = 0; k < doc.size(); ++k) {
        out += doc[k].dump();
        out += k + 1 < doc.size() ? ",\n" : "\n";
    }
    out += "]\n";
    return out;
}

FlowSet load_flow_file(const std::string& path, const Network& net) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open flow file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_flow_text(buf.str(), net);
}

void save_flow_file(const FlowSet& flow, const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write flow file '" + path + "'");
    out << serialize_flow_text(flow, net);
}

} // namespace tsc
