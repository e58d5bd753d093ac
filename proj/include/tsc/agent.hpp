#pragma once

#include <array>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsc/nn.hpp"
#include "tsc/policy.hpp"
#include "tsc/sim.hpp"

namespace tsc {

inline constexpr std::array<int, 7> kDurationSpace{10, 15, 20, 25, 30, 35, 40};

enum class AgentVariant : std::uint8_t { Full, Lite };

/// How the lane features of a phase are pooled into one phase feature.
enum class Fusion : int {
    AttentionMean = 1, // self-attention over the lanes, then the mean
    MeanQuery = 2,     // the mean feature attends over itself and the lanes
    ConcatEmbed = 3,   // concatenate (zero padded to 4 lanes), then dense
    Sum = 4,           // plain sum
};

struct ModelConfig {
    AgentVariant agent = AgentVariant::Full;
    /// 1: q-values of the chosen phase only. 2: every phase through the same
    /// head. 3: phase-level self-attention before the head.
    int network = 1;
    Fusion fusion = Fusion::AttentionMean;
    /// One embedding per segment characteristic instead of a shared one.
    bool per_feature_embedding = false;

    /// Throws ConfigError for combinations that do not exist.
    void validate() const;
    static ModelConfig lite();
};

inline constexpr int kHeads = 4;
inline constexpr int kEmbedDim = 4;  // per characteristic
inline constexpr int kLaneDim = 16;  // four characteristics, concatenated
inline constexpr int kPhaseDim = 16; // width of the post-selection layer
inline constexpr int kMaxConcatLanes = 4;

/// Fresh, seeded parameters for `config`.
ParamStore make_params(const ModelConfig& config, std::uint64_t seed);

/// Parameter names of the two Lite layers.
std::vector<std::string> lite_embedding_names();
std::vector<std::string> lite_output_names();

struct DurationState {
    std::vector<std::array<double, 4>> lanes;        // segment counts per incoming lane
    std::vector<std::vector<std::size_t>> phase_lanes; // indices into lanes
    int phase = 0;

    bool operator==(const DurationState&) const = default;
};

using LaneObservations = std::unordered_map<LaneIndex, LaneObservation>;

/// Packs segment counts of every incoming lane and the chosen phase. Throws
/// MissingLane if an incoming lane is not observed and InvalidPhase for a
/// phase the intersection does not have.
DurationState extract_state(const Intersection& inter, const LaneObservations& obs, int phase);
DurationState extract_state(const World& world, IntersectionIndex i, int phase);

/// Forward pass of the configured model on a tape: 1 x 7 for Network 1 and
/// Lite, |P| x 7 for Networks 2 and 3. Throws EmptyPhase.
Var q_forward(Tape& tape, const ModelConfig& config, const DurationState& state);
/// All rows the model produces.
Matrix q_values(const ModelConfig& config, const ParamStore& params, const DurationState& state);
/// The 7 q-values of the state's chosen phase.
Matrix q_selected(const ModelConfig& config, const ParamStore& params, const DurationState& state);
/// Tape node of the chosen phase's q-values.
Var q_selected_forward(Tape& tape, const ModelConfig& config, const DurationState& state);

struct DurationChoice {
    int index = 0;
    int seconds = 10;
};

/// Greedy (lowest index on ties) with probability 1 - epsilon, otherwise
/// uniform over the space.
DurationChoice select_duration(const Matrix& q, double epsilon, Rng& rng,
                               const std::vector<int>& space = {kDurationSpace.begin(), kDurationSpace.end()});

enum class RewardKind : std::uint8_t { Queue, Pressure, PressurePerMovement };

double compute_reward(const World& world, IntersectionIndex i, RewardKind kind);

/// When the reward of a duration action is sampled: once at the next
/// decision, or averaged over every second the action lasted.
enum class RewardTiming : std::uint8_t { AtDecision, Averaged };

struct Transition {
    DurationState state;
    int action = 0;
    double reward = 0.0;
    DurationState next;
    bool terminal = false;
    IntersectionIndex intersection = 0;
};

/// FIFO ring shared by every intersection.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 12000);
    void push(Transition t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    /// Oldest first.
    const Transition& at(std::size_t k) const { return items_.at(k); }
    /// `n` distinct indices, uniformly without replacement.
    std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

private:
    std::size_t capacity_;
    std::deque<Transition> items_;
};

struct Hyperparams {
    double lr = 0.001;
    std::size_t batch = 20;
    std::size_t sample_size = 3000;
    double gamma = 0.8;
    int epochs = 80;
    int patience = 10;
    double epsilon_start = 0.8;
    double epsilon_decay = 0.95;
    double epsilon_floor = 0.05;
    std::size_t buffer_capacity = 12000;
    /// Rewards are multiplied by this before they are stored.
    double reward_scale = 1.0;

    void validate() const;
    double epsilon_at(int episode) const;
};

/// One pass over min(sample_size, size) transitions with targets from the
/// frozen `target` store. Returns the mean squared TD error. Throws
/// EmptyBuffer.
double train_round(const ReplayBuffer& buffer, const ModelConfig& config, ParamStore& params, const ParamStore& target,
                   Adam& optimizer, const Hyperparams& hp, Rng& rng);

/// Duration control by a Q-network; records transitions when given a buffer.
class DqnDuration : public DurationPolicy {
public:
    DqnDuration(ModelConfig config, const ParamStore& params, double epsilon, std::uint64_t seed,
                ReplayBuffer* buffer = nullptr, RewardKind reward = RewardKind::Queue, double reward_scale = 1.0,
                RewardTiming timing = RewardTiming::AtDecision);
    void reset(const World& world) override;
    int choose_duration(const World& world, IntersectionIndex i, int phase) override;
    void observe(const World& world, IntersectionIndex i) override;
    void set_epsilon(double epsilon) { epsilon_ = epsilon; }

private:
    struct Pending {
        DurationState state;
        int action;
    };
    ModelConfig config_;
    const ParamStore* params_;
    double epsilon_;
    Rng rng_;
    ReplayBuffer* buffer_;
    RewardKind reward_;
    double reward_scale_;
    RewardTiming timing_;
    std::vector<std::optional<Pending>> pending_;
    std::vector<double> reward_sum_;
    std::vector<int> reward_count_;
};

/// Phase with the largest best-duration q-value under a Network 3 model.
class MaxStateValuePhase : public PhasePolicy {
public:
    MaxStateValuePhase(ModelConfig config, const ParamStore& params);
    int choose_phase(const World& world, IntersectionIndex i, int current) override;

private:
    ModelConfig config_;
    const ParamStore* params_;
};

enum class PhaseRule : std::uint8_t { FixedTime, Cyclic, MaxQueue, EfficientPressure, MaxStateValue };

std::shared_ptr<PhasePolicy> make_phase_policy(PhaseRule rule, const ModelConfig& config, const ParamStore& params);

/// Throws ConfigError when the reward does not suit the phase rule.
void validate_pairing(PhaseRule rule, RewardKind reward);

struct TrainingConfig {
    ModelConfig model;
    Hyperparams hp;
    PhaseRule phase_rule = PhaseRule::MaxQueue;
    RewardKind reward = RewardKind::Queue;
    RewardTiming timing = RewardTiming::AtDecision;
    long long horizon = 3600;
    SimOptions sim;
    std::uint64_t seed = 0;
    /// Warm start instead of fresh parameters.
    std::optional<ParamStore> initial;
};

struct EpisodeMetrics {
    int episode = 0;
    double loss = 0.0;
    std::optional<double> aatt;
    std::size_t throughput = 0;
    double epsilon = 0.0;
};

struct TrainingResult {
    ParamStore best;
    std::optional<double> best_aatt;
    std::vector<EpisodeMetrics> episodes;
};

/// Trains one shared model for every intersection: per episode a training
/// run with epsilon-greedy exploration, one train_round and a greedy
/// drained evaluation. Keeps the best-AATT parameters and stops after
/// `patience` evaluations without improvement.
TrainingResult run_training(const Network& net, const FlowSet& flow, const TrainingConfig& config,
                            const std::function<void(const EpisodeMetrics&)>& progress = {});

/// Two-stage controller with a learned duration and the given phase rule.
std::unique_ptr<TwoStageController> make_learned_controller(PhaseRule rule, const ModelConfig& config,
                                                            const ParamStore& params);

/// Loads weights into a model of `config`. Throws ShapeMismatch.
ParamStore load_weights(const ModelConfig& config, std::string_view bytes);

} // namespace tsc
