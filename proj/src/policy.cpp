#include "tsc/policy.hpp"

#include <cmath>

#include "tsc/errors.hpp"

namespace tsc {

namespace {

double queue_of(const QueueMap& queues, LaneIndex l) {
    auto it = queues.find(l);
    if (it == queues.end()) throw MissingLane("no queue observed for lane " + std::to_string(l));
    return it->second;
}

double mean_queue(const QueueMap& queues, const std::vector<LaneIndex>& lanes) {
    double s = 0.0;
    for (LaneIndex l : lanes) s += queue_of(queues, l);
    return lanes.empty() ? 0.0 : s / static_cast<double>(lanes.size());
}

} // namespace

int argmax_lowest(const std::vector<double>& scores) {
    int best = 0;
    for (std::size_t k = 1; k < scores.size(); ++k)
        if (scores[k] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    return best;
}

std::vector<double> phase_queue_scores(const Intersection& inter, const QueueMap& queues) {
    std::vector<double> scores;
    for (const Phase& p : inter.phases) {
        double s = 0.0;
        for (LaneIndex l : p.participating_lanes) s += queue_of(queues, l);
        scores.push_back(s);
    }
    return scores;
}

int max_queue_phase(const Intersection& inter, const QueueMap& queues) {
    return argmax_lowest(phase_queue_scores(inter, queues));
}

double efficient_pressure(const Network& net, const Movement& m, const QueueMap& queues) {
    return mean_queue(queues, m.from_lanes) - mean_queue(queues, net.road(m.to_road).lanes);
}

std::vector<double> efficient_pressure_scores(const Network& net, IntersectionIndex i, const QueueMap& queues) {
    const Intersection& inter = net.intersection(i);
    std::vector<double> ep;
    for (const Movement& m : inter.movements) ep.push_back(efficient_pressure(net, m, queues));
    std::vector<double> scores;
    for (const Phase& p : inter.phases) {
        double s = 0.0;
        for (std::size_t m : p.movements) s += ep[m];
        scores.push_back(s);
    }
    return scores;
}

int efficient_pressure_phase(const Network& net, IntersectionIndex i, const QueueMap& queues) {
    return argmax_lowest(efficient_pressure_scores(net, i, queues));
}

int max_state_value_phase(const Matrix& q) {
    std::vector<double> values;
    for (Eigen::Index r = 0; r < q.rows(); ++r) values.push_back(q.row(r).maxCoeff());
    return argmax_lowest(values);
}

int cyclic_next(int current, int phase_count) {
    if (phase_count <= 0) throw InvalidPhase("no phases to cycle through");
    return current < 0 ? 0 : (current + 1) % phase_count;
}

double queue_reward(const Intersection& inter, const QueueMap& queues) {
    double s = 0.0;
    for (LaneIndex l : inter.incoming_lanes) s += queue_of(queues, l);
    return -s;
}

double pressure_reward(const Network& net, IntersectionIndex i, const QueueMap& queues, bool per_movement) {
    double total = 0.0;
    for (const Movement& m : net.intersection(i).movements) {
        const double p = efficient_pressure(net, m, queues);
        total += per_movement ? std::abs(p) : p;
    }
    return -std::abs(total);
}

// ---------------------------------------------------------------------------

int CyclicPhase::choose_phase(const World& world, IntersectionIndex i, int current) {
    return cyclic_next(current, static_cast<int>(world.network().intersection(i).phases.size()));
}

int MaxQueuePhase::choose_phase(const World& world, IntersectionIndex i, int) {
    return max_queue_phase(world.network().intersection(i), world.queue_map(i));
}

int EfficientPressurePhase::choose_phase(const World& world, IntersectionIndex i, int) {
    return efficient_pressure_phase(world.network(), i, world.queue_map(i));
}

ConstantDuration::ConstantDuration(int seconds) : seconds_(seconds) {
    if (seconds <= 0) throw ConfigError("action duration must be positive");
}

SplitDuration::SplitDuration(std::vector<int> splits) : splits_(std::move(splits)) {
    if (splits_.empty()) throw ConfigError("fixed-time controller needs at least one split");
    for (int s : splits_)
        if (s <= 0) throw ConfigError("fixed-time splits must be positive");
}

int SplitDuration::choose_duration(const World&, IntersectionIndex, int phase) {
    if (splits_.size() == 1) return splits_[0];
    if (phase < 0 || static_cast<std::size_t>(phase) >= splits_.size())
        throw ConfigError("no fixed-time split for phase " + std::to_string(phase));
    return splits_[static_cast<std::size_t>(phase)];
}

TwoStageController::TwoStageController(std::shared_ptr<PhasePolicy> phase, std::shared_ptr<DurationPolicy> duration)
    : phase_(std::move(phase)), duration_(std::move(duration)) {}

void TwoStageController::reset(const World& world) {
    states_.assign(world.network().intersections().size(), ControllerState{});
    phase_->reset(world);
    duration_->reset(world);
}

std::optional<Decision> TwoStageController::tick(World& world, IntersectionIndex i) {
    ControllerState& s = states_.at(i);
    duration_->observe(world, i);
    if (s.phase >= 0) {
        if (s.pending_yellow > 0) --s.pending_yellow;
        else ++s.timer;
        if (s.pending_yellow > 0 || s.timer < s.duration) return std::nullopt;
    }
    const int phase = phase_->choose_phase(world, i, s.phase);
    const int duration = duration_->choose_duration(world, i, phase);
    if (duration <= 0) throw ConfigError("duration policy returned a non-positive duration");
    const bool yellow = world.set_phase(i, phase);
    s = {phase, duration, 0, yellow ? world.options().yellow : 0};
    return Decision{phase, duration};
}

std::unique_ptr<TwoStageController> make_fixed_time(std::vector<int> splits) {
    return std::make_unique<TwoStageController>(std::make_shared<CyclicPhase>(),
                                                std::make_shared<SplitDuration>(std::move(splits)));
}

std::unique_ptr<TwoStageController> make_max_queue(int action_duration) {
    return std::make_unique<TwoStageController>(std::make_shared<MaxQueuePhase>(),
                                                std::make_shared<ConstantDuration>(action_duration));
}

std::unique_ptr<TwoStageController> make_efficient_pressure(int action_duration) {
    return std::make_unique<TwoStageController>(std::make_shared<EfficientPressurePhase>(),
                                                std::make_shared<ConstantDuration>(action_duration));
}

} // namespace tsc
