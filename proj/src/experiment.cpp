#include "tsc/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "tsc/errors.hpp"

namespace tsc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Typed access to an object that rejects keys outside `allowed`.
class Fields {
public:
    Fields(const json& obj, std::string where, std::set<std::string> allowed) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw SchemaError(where_ + ": expected an object");
        for (const auto& [key, value] : obj_.items())
            if (!allowed.count(key)) throw SchemaError(where_ + ": unknown field '" + key + "'");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }
    const json& raw(const std::string& key) const { return obj_.at(key); }

    template <class T>
    void read(const std::string& key, T& out) const {
        if (!has(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception&) {
            throw SchemaError(where_ + "." + key + ": wrong type");
        }
    }

    std::optional<std::string> text(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        std::string s;
        read(key, s);
        return s;
    }

private:
    const json& obj_;
    std::string where_;
};

std::string resolve_path(const std::string& path, const std::string& base_dir) {
    if (base_dir.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base_dir) / path).lexically_normal().string();
}

std::string to_string(DurationMode m) { return m == DurationMode::Learned ? "learned" : "constant"; }
std::string to_string(RewardTiming t) { return t == RewardTiming::Averaged ? "averaged" : "at_decision"; }

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

std::string to_string(PhaseRule rule) {
    switch (rule) {
    case PhaseRule::FixedTime: return "fixed_time";
    case PhaseRule::Cyclic: return "cyclic";
    case PhaseRule::MaxQueue: return "max_queue";
    case PhaseRule::EfficientPressure: return "efficient_mp";
    case PhaseRule::MaxStateValue: return "max_state_value";
    }
    return "?";
}

PhaseRule phase_rule_from_string(const std::string& text) {
    for (PhaseRule r : {PhaseRule::FixedTime, PhaseRule::Cyclic, PhaseRule::MaxQueue, PhaseRule::EfficientPressure,
                        PhaseRule::MaxStateValue})
        if (to_string(r) == text) return r;
    throw ConfigError("unknown policy '" + text + "'");
}

std::string to_string(RewardKind reward) {
    switch (reward) {
    case RewardKind::Queue: return "queue";
    case RewardKind::Pressure: return "pressure";
    case RewardKind::PressurePerMovement: return "pressure_per_movement";
    }
    return "?";
}

RewardKind reward_from_string(const std::string& text) {
    for (RewardKind r : {RewardKind::Queue, RewardKind::Pressure, RewardKind::PressurePerMovement})
        if (to_string(r) == text) return r;
    throw ConfigError("unknown reward '" + text + "'");
}

void ExperimentConfig::validate() const {
    if (name.empty()) throw ConfigError("name must not be empty");
    if (network.file) {
        if (!fs::exists(*network.file)) throw ConfigError("road network file '" + *network.file + "' does not exist");
    } else {
        if (network.grid.rows < 1 || network.grid.cols < 1) throw ConfigError("grid needs at least one row and column");
        if (!(network.grid.ew_length > 0.0) || !(network.grid.ns_length > 0.0))
            throw ConfigError("road lengths must be positive");
    }
    if (flow.file) {
        if (!fs::exists(*flow.file)) throw ConfigError("flow file '" + *flow.file + "' does not exist");
    } else {
        if (!(flow.rate >= 0.0)) throw ConfigError("arrival rate must be non-negative");
        if (!(flow.horizon >= 0.0)) throw ConfigError("flow horizon must be non-negative");
        flow.turns.validate();
    }
    if (horizon <= 0) throw ConfigError("horizon must be positive");
    if (eval_episodes < 1) throw ConfigError("eval_episodes must be at least 1");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw ConfigError("seeds must be distinct");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    if (sim.headway < 1 || sim.yellow < 0 || !(sim.v_max > 0.0) || !(sim.spacing > 0.0))
        throw ConfigError("invalid simulator settings");

    const ControllerSpec& c = controller;
    if (c.policy == PhaseRule::FixedTime && c.duration == DurationMode::Learned)
        throw ConfigError("fixed_time uses its split; use the cyclic policy for learned durations");
    if (c.policy == PhaseRule::MaxStateValue && c.duration != DurationMode::Learned)
        throw ConfigError("max_state_value needs a learned duration model");
    if (c.action_duration <= 0) throw ConfigError("action_duration must be positive");
    if (c.fixed_time_split <= 0) throw ConfigError("fixed_time_split must be positive");
    validate_pairing(c.policy, c.reward);
    if (c.duration == DurationMode::Learned) {
        c.model.validate();
        hp.validate();
        if (c.policy == PhaseRule::MaxStateValue && (c.model.agent != AgentVariant::Full || c.model.network != 3))
            throw ConfigError("max_state_value needs the full agent with network 3");
    }
}

ExperimentConfig parse_experiment(const json& doc, const std::string& base_dir) {
    ExperimentConfig c;
    const Fields top(doc, "config",
                     {"name", "network", "flow", "controller", "hyperparams", "sim", "horizon", "eval_episodes", "seeds",
                      "output_dir"});
    top.read("name", c.name);
    top.read("horizon", c.horizon);
    top.read("eval_episodes", c.eval_episodes);
    top.read("seeds", c.seeds);
    top.read("output_dir", c.output_dir);

    if (top.has("network")) {
        const Fields n(top.raw("network"), "network", {"file", "grid"});
        if (n.has("file") && n.has("grid")) throw SchemaError("network: give either file or grid");
        if (auto f = n.text("file")) c.network.file = resolve_path(*f, base_dir);
        if (n.has("grid")) {
            const Fields g(n.raw("grid"), "network.grid", {"rows", "cols", "preset", "ew_length", "ns_length"});
            g.read("rows", c.network.grid.rows);
            g.read("cols", c.network.grid.cols);
            g.read("ew_length", c.network.grid.ew_length);
            g.read("ns_length", c.network.grid.ns_length);
            if (auto p = g.text("preset")) c.network.grid.preset = topology_from_string(*p);
        }
    }

    if (top.has("flow")) {
        const Fields f(top.raw("flow"), "flow", {"file", "generator"});
        if (f.has("file") && f.has("generator")) throw SchemaError("flow: give either file or generator");
        if (auto p = f.text("file")) c.flow.file = resolve_path(*p, base_dir);
        if (f.has("generator")) {
            const Fields g(f.raw("generator"), "flow.generator", {"rate", "turn_ratios", "horizon"});
            g.read("rate", c.flow.rate);
            g.read("horizon", c.flow.horizon);
            if (g.has("turn_ratios")) {
                const Fields t(g.raw("turn_ratios"), "flow.generator.turn_ratios", {"left", "straight", "right"});
                t.read("left", c.flow.turns.left);
                t.read("straight", c.flow.turns.straight);
                t.read("right", c.flow.turns.right);
            }
        }
    }

    if (top.has("controller")) {
        ControllerSpec& s = c.controller;
        const Fields k(top.raw("controller"), "controller",
                       {"policy", "duration", "agent", "network", "fusion", "per_feature_embedding", "reward",
                        "reward_timing", "action_duration", "fixed_time_split"});
        if (auto p = k.text("policy")) s.policy = phase_rule_from_string(*p);
        // Defaults that follow from the policy.
        s.duration = s.policy == PhaseRule::FixedTime ? DurationMode::Constant : DurationMode::Learned;
        s.reward = s.policy == PhaseRule::EfficientPressure ? RewardKind::Pressure : RewardKind::Queue;
        if (auto d = k.text("duration")) {
            if (*d == "learned") s.duration = DurationMode::Learned;
            else if (*d == "constant") s.duration = DurationMode::Constant;
            else throw ConfigError("unknown duration mode '" + *d + "'");
        }
        if (auto a = k.text("agent")) {
            if (*a == "full") s.model = ModelConfig{};
            else if (*a == "lite") s.model = ModelConfig::lite();
            else throw ConfigError("unknown agent '" + *a + "'");
        }
        k.read("network", s.model.network);
        if (k.has("fusion")) {
            int f = 0;
            k.read("fusion", f);
            if (f < 1 || f > 4) throw ConfigError("fusion must be 1-4");
            s.model.fusion = static_cast<Fusion>(f);
        }
        k.read("per_feature_embedding", s.model.per_feature_embedding);
        if (auto r = k.text("reward")) s.reward = reward_from_string(*r);
        if (auto t = k.text("reward_timing")) {
            if (*t == "at_decision") s.timing = RewardTiming::AtDecision;
            else if (*t == "averaged") s.timing = RewardTiming::Averaged;
            else throw ConfigError("unknown reward timing '" + *t + "'");
        }
        k.read("action_duration", s.action_duration);
        k.read("fixed_time_split", s.fixed_time_split);
    }

    if (top.has("hyperparams")) {
        Hyperparams& h = c.hp;
        const Fields k(top.raw("hyperparams"), "hyperparams",
                       {"learning_rate", "batch_size", "sample_size", "gamma", "epochs", "patience", "epsilon_start",
                        "epsilon_decay", "epsilon_floor", "buffer_capacity", "reward_scale"});
        k.read("learning_rate", h.lr);
        k.read("batch_size", h.batch);
        k.read("sample_size", h.sample_size);
        k.read("gamma", h.gamma);
        k.read("epochs", h.epochs);
        k.read("patience", h.patience);
        k.read("epsilon_start", h.epsilon_start);
        k.read("epsilon_decay", h.epsilon_decay);
        k.read("epsilon_floor", h.epsilon_floor);
        k.read("buffer_capacity", h.buffer_capacity);
        k.read("reward_scale", h.reward_scale);
    }

    if (top.has("sim")) {
        const Fields k(top.raw("sim"), "sim", {"v_max", "spacing", "headway", "yellow", "lane_capacity"});
        k.read("v_max", c.sim.v_max);
        k.read("spacing", c.sim.spacing);
        k.read("headway", c.sim.headway);
        k.read("yellow", c.sim.yellow);
        k.read("lane_capacity", c.sim.lane_capacity);
    }
    return c;
}

ExperimentConfig load_experiment_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_experiment(doc, fs::path(path).parent_path().string());
}

json experiment_to_json(const ExperimentConfig& c) {
    json doc;
    doc["name"] = c.name;
    if (c.network.file) {
        doc["network"] = {{"file", *c.network.file}};
    } else {
        const GridSpec& g = c.network.grid;
        doc["network"] = {{"grid",
                           {{"rows", g.rows},
                            {"cols", g.cols},
                            {"preset", std::string(1, to_char(g.preset))},
                            {"ew_length", g.ew_length},
                            {"ns_length", g.ns_length}}}};
    }
    if (c.flow.file) {
        doc["flow"] = {{"file", *c.flow.file}};
    } else {
        doc["flow"] = {{"generator",
                        {{"rate", c.flow.rate},
                         {"horizon", c.flow.horizon},
                         {"turn_ratios",
                          {{"left", c.flow.turns.left}, {"straight", c.flow.turns.straight}, {"right", c.flow.turns.right}}}}}};
    }
    const ControllerSpec& s = c.controller;
    doc["controller"] = {{"policy", to_string(s.policy)},
                         {"duration", to_string(s.duration)},
                         {"agent", s.model.agent == AgentVariant::Lite ? "lite" : "full"},
                         {"network", s.model.network},
                         {"fusion", static_cast<int>(s.model.fusion)},
                         {"per_feature_embedding", s.model.per_feature_embedding},
                         {"reward", to_string(s.reward)},
                         {"reward_timing", to_string(s.timing)},
                         {"action_duration", s.action_duration},
                         {"fixed_time_split", s.fixed_time_split}};
    const Hyperparams& h = c.hp;
    doc["hyperparams"] = {{"learning_rate", h.lr},
                          {"batch_size", h.batch},
                          {"sample_size", h.sample_size},
                          {"gamma", h.gamma},
                          {"epochs", h.epochs},
                          {"patience", h.patience},
                          {"epsilon_start", h.epsilon_start},
                          {"epsilon_decay", h.epsilon_decay},
                          {"epsilon_floor", h.epsilon_floor},
                          {"buffer_capacity", h.buffer_capacity},
                          {"reward_scale", h.reward_scale}};
    doc["sim"] = {{"v_max", c.sim.v_max},
                  {"spacing", c.sim.spacing},
                  {"headway", c.sim.headway},
                  {"yellow", c.sim.yellow},
                  {"lane_capacity", c.sim.lane_capacity}};
    doc["horizon"] = c.horizon;
    doc["eval_episodes"] = c.eval_episodes;
    doc["seeds"] = c.seeds;
    doc["output_dir"] = c.output_dir;
    return doc;
}

std::string resolve_output_dir(const std::string& dir) {
    const char* root = std::getenv("TSC_OUTPUT_ROOT");
    if (!root || !*root || fs::path(dir).is_absolute()) return dir;
    return (fs::path(root) / dir).string();
}

Network build_network(const ExperimentConfig& c) {
    if (c.network.file) return load_roadnet_file(*c.network.file);
    const GridSpec& g = c.network.grid;
    return build_grid(g.rows, g.cols, g.preset, g.ew_length, g.ns_length);
}

FlowSet build_flow(const ExperimentConfig& c, const Network& net, std::uint64_t seed) {
    if (c.flow.file) return load_flow_file(*c.flow.file, net);
    return generate_flow(net, c.flow.rate, c.flow.turns, c.flow.horizon, seed);
}

std::uint64_t eval_flow_seed(std::uint64_t seed, int episode) {
    return seed + 7919ULL * static_cast<std::uint64_t>(episode);
}

TrainingConfig training_config(const ExperimentConfig& c, std::uint64_t seed) {
    TrainingConfig t;
    t.model = c.controller.model;
    t.hp = c.hp;
    t.phase_rule = c.controller.policy;
    t.reward = c.controller.reward;
    t.timing = c.controller.timing;
    t.horizon = c.horizon;
    t.sim = c.sim;
    t.seed = seed;
    return t;
}

std::unique_ptr<TwoStageController> make_controller(const ExperimentConfig& c, const ParamStore* weights) {
    const ControllerSpec& s = c.controller;
    if (s.policy == PhaseRule::FixedTime) return make_fixed_time({s.fixed_time_split});
    if (s.duration == DurationMode::Constant) {
        switch (s.policy) {
        case PhaseRule::Cyclic: return make_fixed_time({s.action_duration});
        case PhaseRule::MaxQueue: return make_max_queue(s.action_duration);
        case PhaseRule::EfficientPressure: return make_efficient_pressure(s.action_duration);
        default: break;
        }
        throw ConfigError(to_string(s.policy) + " needs a learned duration model");
    }
    if (!weights) throw ConfigError("policy '" + to_string(s.policy) + "' with learned durations needs weights");
    return make_learned_controller(s.policy, s.model, *weights);
}

SeedEvaluation evaluate_seed(const ExperimentConfig& c, const Network& net, const ParamStore* weights,
                             std::uint64_t seed) {
    SeedEvaluation out;
    out.seed = seed;
    auto ctrl = make_controller(c, weights);
    for (int e = 0; e < c.eval_episodes; ++e) {
        const FlowSet flow = build_flow(c, net, eval_flow_seed(seed, e));
        out.episodes.push_back(make_report(run_episode(net, flow, *ctrl, {c.horizon, true, c.sim})));
    }
    out.mean = average_reports(out.episodes);
    return out;
}

TrainingResult train_seed(const ExperimentConfig& c, const Network& net, std::uint64_t seed,
                          std::optional<ParamStore> initial,
                          const std::function<void(const EpisodeMetrics&)>& progress) {
    TrainingConfig t = training_config(c, seed);
    t.initial = std::move(initial);
    return run_training(net, build_flow(c, net, seed), t, progress);
}

std::string training_csv(const std::vector<EpisodeMetrics>& episodes) {
    std::string out = "episode,loss,aatt,throughput,epsilon\n";
    for (const EpisodeMetrics& m : episodes)
        out += std::to_string(m.episode) + "," + format_number(m.loss) + "," + (m.aatt ? format_number(*m.aatt) : "") +
               "," + std::to_string(m.throughput) + "," + format_number(m.epsilon) + "\n";
    return out;
}

std::string evaluation_csv(const std::string& method, const std::vector<SeedEvaluation>& runs) {
    std::string out = "method,seed,metric,value\n";
    for (const SeedEvaluation& r : runs) {
        const std::string prefix = method + "," + std::to_string(r.seed) + ",";
        for (std::size_t e = 0; e < r.episodes.size(); ++e) {
            const EvalReport& ep = r.episodes[e];
            const std::string tag = "episode_" + std::to_string(e) + "_";
            if (ep.aatt) out += prefix + tag + "aatt," + format_number(*ep.aatt) + "\n";
            out += prefix + tag + "throughput," + std::to_string(ep.throughput) + "\n";
        }
        if (r.mean.aatt) out += prefix + "aatt," + format_number(*r.mean.aatt) + "\n";
        out += prefix + "throughput," + std::to_string(r.mean.throughput) + "\n";
        out += prefix + "mean_queue," + format_number(r.mean.mean_queue) + "\n";
        out += prefix + "max_queue," + format_number(r.mean.max_queue) + "\n";
    }
    return out;
}

json evaluation_report(const std::string& method, const std::vector<SeedEvaluation>& runs) {
    json doc;
    doc["method"] = method;
    json seeds = json::array();
    std::vector<double> values;
    for (const SeedEvaluation& r : runs) {
        json row = {{"seed", r.seed}, {"throughput", r.mean.throughput}, {"mean_queue", r.mean.mean_queue}};
        row["aatt"] = r.mean.aatt ? json(*r.mean.aatt) : json(nullptr);
        if (r.mean.aatt) values.push_back(*r.mean.aatt);
        seeds.push_back(row);
    }
    doc["seeds"] = seeds;
    if (!values.empty() && values.size() == runs.size()) {
        double sum = 0.0;
        for (double v : values) sum += v;
        doc["aatt_mean"] = sum / static_cast<double>(values.size());
        doc["aatt_median"] = median(values);
        doc["aatt_min"] = *std::min_element(values.begin(), values.end());
        doc["aatt_max"] = *std::max_element(values.begin(), values.end());
    } else {
        doc["aatt_mean"] = nullptr;
        doc["aatt_median"] = nullptr;
    }
    return doc;
}

bool decisions_cyclic(const Network& net, const EpisodeLog& log) {
    std::vector<int> expect(net.intersections().size(), 0);
    for (const DecisionRecord& d : log.decisions) {
        const int n = static_cast<int>(net.intersection(d.intersection).phases.size());
        int& e = expect.at(d.intersection);
        if (d.phase != e) return false;
        e = (e + 1) % n;
    }
    return true;
}

void write_text_file(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + path + "'");
}

} // namespace tsc
