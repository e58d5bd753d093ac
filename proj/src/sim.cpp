#include "tsc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsc/errors.hpp"

namespace tsc {

World::World(const Network& net, const FlowSet& flow, SimOptions options, std::optional<long long> injection_end)
    : net_(&net), flow_(&flow), options_(options) {
    spec_end_ = flow.vehicles.size();
    if (injection_end) {
        spec_end_ = static_cast<std::size_t>(
            std::lower_bound(flow.vehicles.begin(), flow.vehicles.end(), *injection_end,
                             [](const VehicleSpec& v, long long t) { return v.start_time < t; }) -
            flow.vehicles.begin());
    }
    lanes_.resize(net.lanes().size());
    last_discharge_.assign(net.lanes().size(), std::numeric_limits<long long>::min() / 2);
    displays_.resize(net.intersections().size());
    in_phase_.resize(net.intersections().size());
    for (IntersectionIndex i = 0; i < net.intersections().size(); ++i) {
        const Intersection& inter = net.intersection(i);
        auto& table = in_phase_[i];
        table.assign(inter.phases.size() * inter.movements.size(), false);
        for (const Phase& p : inter.phases)
            for (std::size_t m : p.movements) table[p.index * inter.movements.size() + m] = true;
    }
}

std::size_t World::pending() const { return spec_end_ - next_spec_; }

bool World::set_phase(IntersectionIndex i, int phase) {
    const Intersection& inter = net_->intersection(i);
    if (phase < 0 || phase >= static_cast<int>(inter.phases.size()))
        throw InvalidPhase("phase " + std::to_string(phase) + " does not exist at '" + inter.id + "'");
    SignalDisplay& d = displays_.at(i);
    if (d.green_phase == phase) return false;
    const bool first = d.green_phase < 0;
    d.green_phase = phase;
    if (first) return false;
    d.yellow_remaining = options_.yellow;
    return options_.yellow > 0;
}

bool World::permitted(IntersectionIndex i, std::size_t movement) const {
    const Intersection& inter = net_->intersection(i);
    if (inter.movements.at(movement).always_permitted || options_.all_green) return true;
    const SignalDisplay& d = displays_[i];
    if (d.green_phase < 0 || d.yellow_remaining > 0) return false;
    return in_phase_[i][d.green_phase * inter.movements.size() + movement];
}

LaneIndex World::choose_lane(const VehicleSpec& spec, std::size_t route_pos) const {
    const Road& road = net_->road(spec.route[route_pos]);
    const std::vector<LaneIndex>* candidates = &road.lanes;
    if (road.to && route_pos + 1 < spec.route.size()) {
        if (auto m = net_->find_movement(*road.to, spec.route[route_pos], spec.route[route_pos + 1]))
            candidates = &net_->intersection(*road.to).movements[*m].from_lanes;
    }
    LaneIndex best = candidates->front();
    for (LaneIndex l : *candidates) {
        const std::size_t nl = lanes_[l].size(), nb = lanes_[best].size();
        if (nl < nb || (nl == nb && net_->lane(l).position_index < net_->lane(best).position_index)) best = l;
    }
    return best;
}

void World::place(std::size_t vehicle, LaneIndex lane) {
    VehicleState& v = vehicles_[vehicle];
    v.lane = lane;
    v.distance = net_->lane(lane).length;
    v.mode = VehicleMode::Moving;
    lanes_[lane].push_back(vehicle);
}

void World::step() {
    const long long t = clock_;

    while (next_spec_ < spec_end_ && flow_->vehicles[next_spec_].start_time <= t) {
        const VehicleSpec& spec = flow_->vehicles[next_spec_];
        if (spec.start_time == t) {
            VehicleState v;
            v.spec = next_spec_;
            v.enter_time = t;
            vehicles_.push_back(v);
            place(vehicles_.size() - 1, choose_lane(spec, 0));
            ++injected_;
        }
        ++next_spec_;
    }

    for (auto& queue : lanes_) {
        double ahead = -std::numeric_limits<double>::infinity();
        for (std::size_t id : queue) {
            VehicleState& v = vehicles_[id];
            const double old = v.distance;
            double d = std::max(old - options_.v_max, 0.0);
            d = std::max(d, ahead + options_.spacing);
            d = std::min(d, old);
            v.distance = d;
            v.mode = d == old ? VehicleMode::Queued : VehicleMode::Moving;
            ahead = d;
        }
    }

    struct Transfer {
        std::size_t vehicle;
    };
    std::vector<Transfer> transfers;
    for (LaneIndex l = 0; l < lanes_.size(); ++l) {
        auto& queue = lanes_[l];
        if (queue.empty()) continue;
        const std::size_t id = queue.front();
        VehicleState& v = vehicles_[id];
        if (v.distance > 0.0) continue;
        const VehicleSpec& spec = flow_->vehicles[v.spec];
        const Road& road = net_->road(net_->lane(l).road);
        if (v.route_pos + 1 >= spec.route.size()) {
            v.exit_time = t + 1;
            queue.pop_front();
            ++exited_;
            continue;
        }
        if (t - last_discharge_[l] < options_.headway) continue;
        const IntersectionIndex i = *road.to;
        const auto m = net_->find_movement(i, spec.route[v.route_pos], spec.route[v.route_pos + 1]);
        if (!permitted(i, *m)) continue;
        if (options_.lane_capacity) {
            const LaneIndex target = choose_lane(spec, v.route_pos + 1);
            const auto cap = static_cast<std::size_t>(std::floor(net_->lane(target).length / options_.spacing));
            if (lanes_[target].size() >= cap) continue;
        }
        last_discharge_[l] = t;
        queue.pop_front();
        transfers.push_back({id});
    }
    for (const Transfer& tr : transfers) {
        VehicleState& v = vehicles_[tr.vehicle];
        ++v.route_pos;
        place(tr.vehicle, choose_lane(flow_->vehicles[v.spec], v.route_pos));
    }

    for (SignalDisplay& d : displays_) {
        if (d.yellow_remaining > 0) --d.yellow_remaining;
    }
    ++clock_;
}

LaneObservation World::observe_lane(LaneIndex lane) const {
    LaneObservation obs;
    const double length = net_->lane(lane).length;
    // A vehicle standing exactly at the far end of a short lane counts in the
    // lane's last band, so bands past the lane stay zero.
    const int last_band = std::clamp(static_cast<int>(std::ceil(length / 100.0)) - 1, 0, 3);
    for (std::size_t id : lanes_[lane]) {
        const VehicleState& v = vehicles_[id];
        if (v.mode == VehicleMode::Queued) ++obs.queue;
        if (v.distance >= 400.0) continue;
        ++obs.segments[std::min(static_cast<int>(v.distance / 100.0), last_band)];
    }
    return obs;
}

std::vector<LaneObservation> World::observe(IntersectionIndex i) const {
    std::vector<LaneObservation> out;
    for (LaneIndex l : net_->intersection(i).incoming_lanes) out.push_back(observe_lane(l));
    return out;
}

std::unordered_map<LaneIndex, double> World::queue_map(IntersectionIndex i) const {
    std::unordered_map<LaneIndex, double> q;
    const Intersection& inter = net_->intersection(i);
    for (const auto* set : {&inter.incoming_lanes, &inter.outgoing_lanes})
        for (LaneIndex l : *set) q[l] = observe_lane(l).queue;
    return q;
}

int World::intersection_queue(IntersectionIndex i) const {
    int total = 0;
    for (LaneIndex l : net_->intersection(i).incoming_lanes)
        for (std::size_t id : lanes_[l])
            if (vehicles_[id].mode == VehicleMode::Queued) ++total;
    return total;
}

std::string EpisodeLog::serialize() const {
    std::string out;
    out.reserve(64 * (vehicles.size() + decisions.size() + steps.size()));
    for (const VehicleRecord& v : vehicles) {
        out += "V," + v.id + "," + std::to_string(v.enter_time) + ",";
        out += v.exit_time ? std::to_string(*v.exit_time) : "-";
        out += "\n";
    }
    for (const DecisionRecord& d : decisions) {
        out += "D," + std::to_string(d.time) + "," + std::to_string(d.intersection) + "," + std::to_string(d.phase) +
               "," + std::to_string(d.duration) + "\n";
    }
    for (const StepRecord& s : steps) {
        out += "Q," + std::to_string(s.time) + "," + std::to_string(s.injected) + "," + std::to_string(s.in_network) +
               "," + std::to_string(s.exited) + ",";
        for (std::size_t k = 0; k < s.queues.size(); ++k) {
            if (k) out += ";";
            out += std::to_string(s.queues[k]);
        }
        out += "\n";
    }
    return out;
}

EpisodeLog run_episode(const Network& net, const FlowSet& flow, Controller& controller, const EpisodeOptions& options) {
    if (options.horizon <= 0) throw ConfigError("episode horizon must be positive");
    World world(net, flow, options.sim, options.drain ? std::optional<long long>(options.horizon) : std::nullopt);
    controller.reset(world);
    EpisodeLog log;
    const std::size_t n_inter = net.intersections().size();
    const long long cap = 4 * options.horizon;

    while (true) {
        const long long t = world.clock();
        if (!options.drain && t >= options.horizon) break;
        if (options.drain && t >= options.horizon && world.empty()) break;
        if (options.drain && t >= cap)
            throw DrainTimeout(std::to_string(world.in_network()) + " vehicles still in the network after " +
                               std::to_string(cap) + " s");
        for (IntersectionIndex i = 0; i < n_inter; ++i) {
            if (auto d = controller.tick(world, i)) log.decisions.push_back({t, i, d->phase, d->duration});
        }
        world.step();
        StepRecord rec;
        rec.time = world.clock();
        rec.injected = world.injected();
        rec.in_network = world.in_network();
        rec.exited = world.exited();
        rec.queues.resize(n_inter);
        for (IntersectionIndex i = 0; i < n_inter; ++i) rec.queues[i] = world.intersection_queue(i);
        log.steps.push_back(std::move(rec));
    }

    for (const VehicleState& v : world.vehicles())
        log.vehicles.push_back({flow.vehicles[v.spec].id, v.enter_time, v.exit_time});
    return log;
}

} // namespace tsc
