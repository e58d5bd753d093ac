#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsc/agent.hpp"
#include "tsc/metrics.hpp"

namespace tsc {

struct GridSpec {
    int rows = 1;
    int cols = 1;
    Topology preset = Topology::A;
    double ew_length = 300.0;
    double ns_length = 300.0;
};

/// Either a road network file or grid parameters.
struct NetworkSpec {
    std::optional<std::string> file;
    GridSpec grid;
};

/// Either a flow file or generator parameters. Generated flows are seeded by
/// the experiment seed.
struct FlowSpec {
    std::optional<std::string> file;
    double rate = 0.1; // vehicles per second per entry road
    TurnRatios turns;
    double horizon = 3600.0; // injection window
};

enum class DurationMode : std::uint8_t { Learned, Constant };

struct ControllerSpec {
    PhaseRule policy = PhaseRule::MaxQueue;
    DurationMode duration = DurationMode::Learned;
    ModelConfig model;
    RewardKind reward = RewardKind::Queue;
    RewardTiming timing = RewardTiming::AtDecision;
    int action_duration = 15;  // constant-duration baselines
    int fixed_time_split = 30; // seconds per phase
};

struct ExperimentConfig {
    std::string name = "experiment";
    NetworkSpec network;
    FlowSpec flow;
    ControllerSpec controller;
    Hyperparams hp;
    SimOptions sim;
    long long horizon = 3600;
    int eval_episodes = 10;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";

    /// Range checks, reward pairing and existence of referenced files.
    /// Throws ConfigError.
    void validate() const;
    bool learned() const { return controller.duration == DurationMode::Learned; }
};

/// Reads a config; absent fields take their defaults, unknown fields are
/// rejected. Relative file paths resolve against `base_dir`. Throws
/// SchemaError for malformed documents and ConfigError for bad values.
ExperimentConfig parse_experiment(const nlohmann::json& document, const std::string& base_dir = "");
ExperimentConfig load_experiment_file(const std::string& path);

/// Every field written out explicitly.
nlohmann::json experiment_to_json(const ExperimentConfig& config);

/// `dir` under $TSC_OUTPUT_ROOT when that is set and `dir` is relative.
std::string resolve_output_dir(const std::string& dir);

std::string to_string(PhaseRule rule);
PhaseRule phase_rule_from_string(const std::string& text);
std::string to_string(RewardKind reward);
RewardKind reward_from_string(const std::string& text);

Network build_network(const ExperimentConfig& config);
/// Flow for one episode; generated flows use `seed`.
FlowSet build_flow(const ExperimentConfig& config, const Network& net, std::uint64_t seed);
/// Flow seed of evaluation episode `episode` under experiment seed `seed`.
/// Episode 0 replays the training flow.
std::uint64_t eval_flow_seed(std::uint64_t seed, int episode);

TrainingConfig training_config(const ExperimentConfig& config, std::uint64_t seed);

/// Controller described by the config. Learned durations need `weights`
/// (ConfigError otherwise). The controller keeps a reference to them.
std::unique_ptr<TwoStageController> make_controller(const ExperimentConfig& config, const ParamStore* weights);

struct SeedEvaluation {
    std::uint64_t seed = 0;
    std::vector<EvalReport> episodes;
    EvalReport mean;
};

/// `eval_episodes` drained episodes.
SeedEvaluation evaluate_seed(const ExperimentConfig& config, const Network& net, const ParamStore* weights,
                             std::uint64_t seed);

/// Best weights and per-episode metrics for one seed.
TrainingResult train_seed(const ExperimentConfig& config, const Network& net, std::uint64_t seed,
                          std::optional<ParamStore> initial = std::nullopt,
                          const std::function<void(const EpisodeMetrics&)>& progress = {});

std::string training_csv(const std::vector<EpisodeMetrics>& episodes);
/// Long table: method,seed,metric,value.
std::string evaluation_csv(const std::string& method, const std::vector<SeedEvaluation>& runs);
/// method, per-seed AATT, mean and median over seeds.
nlohmann::json evaluation_report(const std::string& method, const std::vector<SeedEvaluation>& runs);

/// True when every intersection's decisions step through its phases in
/// order, wrapping after the last one.
bool decisions_cyclic(const Network& net, const EpisodeLog& log);

void write_text_file(const std::string& path, const std::string& text);

} // namespace tsc
