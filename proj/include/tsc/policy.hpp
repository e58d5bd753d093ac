#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tsc/nn.hpp"
#include "tsc/roadnet.hpp"
#include "tsc/sim.hpp"

namespace tsc {

/// Queue length per lane.
using QueueMap = std::unordered_map<LaneIndex, double>;

/// Argmax with the lowest index winning ties.
int argmax_lowest(const std::vector<double>& scores);

/// Sum of queues over each phase's participating lanes. Throws MissingLane.
std::vector<double> phase_queue_scores(const Intersection& inter, const QueueMap& queues);
int max_queue_phase(const Intersection& inter, const QueueMap& queues);

/// Mean queue on the movement's lanes minus mean queue on the lanes of the
/// road it leads to. Throws MissingLane.
double efficient_pressure(const Network& net, const Movement& m, const QueueMap& queues);
std::vector<double> efficient_pressure_scores(const Network& net, IntersectionIndex i, const QueueMap& queues);
int efficient_pressure_phase(const Network& net, IntersectionIndex i, const QueueMap& queues);

/// Row with the largest row maximum.
int max_state_value_phase(const Matrix& q);

/// Next phase in preset order; a negative `current` starts at phase 0.
int cyclic_next(int current, int phase_count);

/// Negative total incoming queue.
double queue_reward(const Intersection& inter, const QueueMap& queues);
/// Negative absolute pressure: -|sum of movement pressures| by default,
/// -sum |movement pressure| with `per_movement`.
double pressure_reward(const Network& net, IntersectionIndex i, const QueueMap& queues, bool per_movement = false);

// ---------------------------------------------------------------------------
// Two-stage control

class PhasePolicy {
public:
    virtual ~PhasePolicy() = default;
    virtual void reset(const World&) {}
    virtual int choose_phase(const World& world, IntersectionIndex i, int current) = 0;
};

class DurationPolicy {
public:
    virtual ~DurationPolicy() = default;
    virtual void reset(const World&) {}
    /// Green seconds for `phase`, which has just been chosen at `i`.
    virtual int choose_duration(const World& world, IntersectionIndex i, int phase) = 0;
    /// Called once per second for `i`, before any decision in that second.
    virtual void observe(const World&, IntersectionIndex) {}
};

class CyclicPhase : public PhasePolicy {
public:
    int choose_phase(const World& world, IntersectionIndex i, int current) override;
};

class MaxQueuePhase : public PhasePolicy {
public:
    int choose_phase(const World& world, IntersectionIndex i, int current) override;
};

class EfficientPressurePhase : public PhasePolicy {
public:
    int choose_phase(const World& world, IntersectionIndex i, int current) override;
};

class ConstantDuration : public DurationPolicy {
public:
    explicit ConstantDuration(int seconds);
    int choose_duration(const World&, IntersectionIndex, int) override { return seconds_; }

private:
    int seconds_;
};

/// Per-phase green times; a single entry applies to every phase.
class SplitDuration : public DurationPolicy {
public:
    explicit SplitDuration(std::vector<int> splits);
    int choose_duration(const World& world, IntersectionIndex i, int phase) override;

private:
    std::vector<int> splits_;
};

struct ControllerState {
    int phase = -1;
    int duration = 0;
    int timer = 0;
    int pending_yellow = 0;
};

/// Per intersection: count green seconds; when the count reaches the chosen
/// duration pick a phase, then a duration for it. The first decision happens
/// at time 0. Yellow seconds after a phase change are not counted.
class TwoStageController : public Controller {
public:
    TwoStageController(std::shared_ptr<PhasePolicy> phase, std::shared_ptr<DurationPolicy> duration);
    void reset(const World& world) override;
    std::optional<Decision> tick(World& world, IntersectionIndex i) override;
    const ControllerState& state(IntersectionIndex i) const { return states_.at(i); }

private:
    std::shared_ptr<PhasePolicy> phase_;
    std::shared_ptr<DurationPolicy> duration_;
    std::vector<ControllerState> states_;
};

/// Cyclic phases with fixed splits.
std::unique_ptr<TwoStageController> make_fixed_time(std::vector<int> splits);
/// Max-queue phase with a constant action duration.
std::unique_ptr<TwoStageController> make_max_queue(int action_duration);
std::unique_ptr<TwoStageController> make_efficient_pressure(int action_duration);

} // namespace tsc
