#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "tsc/errors.hpp"
#include "tsc/experiment.hpp"

namespace tsc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

std::string seeded(std::string pattern, std::uint64_t seed) {
    const std::string key = "{seed}";
    for (auto pos = pattern.find(key); pos != std::string::npos; pos = pattern.find(key))
        pattern.replace(pos, key.size(), std::to_string(seed));
    return pattern;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw ConfigError(what + " '" + path + "' does not exist");
}

// Config loading shared by the experiment commands.
struct ConfigArgs {
    std::string path;
    std::string output;
    int action_duration = 0;
    int fixed_split = 0;
    int episodes = 0;

    void add_to(CLI::App& app) {
        app.add_option("-c,--config", path, "Experiment config (JSON)")->required();
        app.add_option("-o,--output", output, "Output directory (overrides the config)");
        app.add_option("--action-duration", action_duration,
                       "Constant action duration in seconds for baselines (config default 15)");
        app.add_option("--fixed-split", fixed_split, "Fixed-time green per phase in seconds (config default 30)");
        app.add_option("--episodes", episodes, "Evaluation episodes per seed (config default 10)");
    }

    ExperimentConfig load() const {
        ExperimentConfig c = load_experiment_file(path);
        if (!output.empty()) c.output_dir = output;
        if (action_duration) c.controller.action_duration = action_duration;
        if (fixed_split) c.controller.fixed_time_split = fixed_split;
        if (episodes) c.eval_episodes = episodes;
        c.output_dir = resolve_output_dir(c.output_dir);
        c.validate();
        return c;
    }
};

ParamStore read_weights(const ExperimentConfig& c, const std::string& path) {
    require_file(path, "weight file");
    return load_weights(c.controller.model, read_file_bytes(path));
}

std::map<std::uint64_t, ParamStore> weights_per_seed(const ExperimentConfig& c, const std::string& pattern) {
    std::map<std::uint64_t, ParamStore> out;
    for (std::uint64_t s : c.seeds) out.emplace(s, read_weights(c, seeded(pattern, s)));
    return out;
}

void echo_config(const ExperimentConfig& c, const std::string& file = "config.resolved.json") {
    write_text_file(join(c.output_dir, file), experiment_to_json(c).dump(2) + "\n");
}

template <class F>
auto with_seed_context(std::uint64_t seed, F&& body) {
    try {
        return body();
    } catch (const DrainTimeout& e) {
        throw DrainTimeout("seed " + std::to_string(seed) + ": " + e.what());
    }
}

std::vector<SeedEvaluation> evaluate_all(const ExperimentConfig& c, const Network& net,
                                         const std::map<std::uint64_t, ParamStore>& weights, std::ostream& out) {
    std::vector<SeedEvaluation> runs;
    for (std::uint64_t s : c.seeds) {
        const ParamStore* w = weights.count(s) ? &weights.at(s) : nullptr;
        runs.push_back(with_seed_context(s, [&] { return evaluate_seed(c, net, w, s); }));
        const EvalReport& m = runs.back().mean;
        out << "seed " << s << ": aatt " << (m.aatt ? fmt(*m.aatt) : "n/a") << " over " << c.eval_episodes
            << " episodes\n";
    }
    return runs;
}

void write_evaluation(const ExperimentConfig& c, const std::vector<SeedEvaluation>& runs, std::ostream& out) {
    write_text_file(join(c.output_dir, "eval.csv"), evaluation_csv(c.name, runs));
    const json report = evaluation_report(c.name, runs);
    write_text_file(join(c.output_dir, "report.json"), report.dump(2) + "\n");
    if (report["aatt_median"].is_number())
        out << c.name << ": median aatt " << fmt(report["aatt_median"].get<double>()) << "\n";
}

// --- commands -------------------------------------------------------------

struct GenNetArgs {
    std::string grid = "1x1";
    std::string preset = "A";
    double ew = 300.0;
    double ns = 300.0;
    std::string output = "roadnet.json";
};

void gen_net(const GenNetArgs& a, std::ostream& out) {
    int rows = 0, cols = 0;
    char x = 0, extra = 0;
    if (std::sscanf(a.grid.c_str(), "%d%c%d%c", &rows, &x, &cols, &extra) != 3 || x != 'x')
        throw ConfigError("grid must look like ROWSxCOLS, got '" + a.grid + "'");
    if (rows < 1 || cols < 1) throw ConfigError("grid needs at least one row and column");
    if (!(a.ew > 0.0) || !(a.ns > 0.0)) throw ConfigError("road lengths must be positive");
    const Network net = build_grid(rows, cols, topology_from_string(a.preset), a.ew, a.ns);
    const std::string path = resolve_output_dir(a.output);
    write_text_file(path, serialize_roadnet_text(net));
    out << "wrote " << net.intersections().size() << " intersections, " << net.roads().size() << " roads to " << path
        << "\n";
}

struct GenFlowArgs {
    std::string net;
    double rate = 0.1;
    std::uint64_t seed = 1;
    double horizon = 3600.0;
    TurnRatios turns;
    std::string output = "flow.json";
};

void gen_flow(const GenFlowArgs& a, std::ostream& out) {
    require_file(a.net, "road network file");
    if (!(a.rate >= 0.0) || !(a.horizon >= 0.0)) throw ConfigError("rate and horizon must be non-negative");
    a.turns.validate();
    const Network net = load_roadnet_file(a.net);
    const FlowSet flow = generate_flow(net, a.rate, a.turns, a.horizon, a.seed);
    const std::string path = resolve_output_dir(a.output);
    write_text_file(path, serialize_flow_text(flow, net));
    out << "wrote " << flow.vehicles.size() << " vehicles to " << path << "\n";
}

struct TrainArgs {
    ConfigArgs config;
    bool resume = false;
    std::string init;
};

void train(const TrainArgs& a, std::ostream& out) {
    const ExperimentConfig c = a.config.load();
    if (!c.learned()) throw ConfigError("policy '" + to_string(c.controller.policy) + "' has nothing to train");
    const Network net = build_network(c);
    std::map<std::uint64_t, std::optional<ParamStore>> initial;
    std::map<std::uint64_t, std::string> initial_from;
    for (std::uint64_t s : c.seeds) {
        std::string from;
        if (!a.init.empty()) from = seeded(a.init, s);
        else if (a.resume && fs::exists(join(c.output_dir, "weights_seed" + std::to_string(s) + ".bin")))
            from = join(c.output_dir, "weights_seed" + std::to_string(s) + ".bin");
        if (!from.empty()) {
            initial[s] = read_weights(c, from);
            initial_from[s] = from;
        }
        build_flow(c, net, s);
    }
    echo_config(c);

    std::string summary = "seed,best_aatt,episodes,warm_start\n";
    for (std::uint64_t s : c.seeds) {
        if (initial_from.count(s)) out << "seed " << s << ": warm start from " << initial_from[s] << "\n";
        auto progress = [&](const EpisodeMetrics& m) {
            out << "seed " << s << " episode " << m.episode << ": loss " << fmt(m.loss) << " aatt "
                << (m.aatt ? fmt(*m.aatt) : "n/a") << "\n";
        };
        const TrainingResult r = with_seed_context(s, [&] { return train_seed(c, net, s, initial[s], progress); });
        save_params_file(r.best, join(c.output_dir, "weights_seed" + std::to_string(s) + ".bin"));
        write_text_file(join(c.output_dir, "train_seed" + std::to_string(s) + ".csv"), training_csv(r.episodes));
        summary += std::to_string(s) + "," + (r.best_aatt ? fmt(*r.best_aatt) : "") + "," +
                   std::to_string(r.episodes.size()) + "," + (initial_from.count(s) ? initial_from[s] : "") + "\n";
        out << "seed " << s << ": best aatt " << (r.best_aatt ? fmt(*r.best_aatt) : "n/a") << "\n";
    }
    write_text_file(join(c.output_dir, "train_summary.csv"), summary);
}

struct EvalArgs {
    ConfigArgs config;
    std::string weights;
};

void eval(const EvalArgs& a, std::ostream& out) {
    const ExperimentConfig c = a.config.load();
    if (c.learned() && a.weights.empty())
        throw ConfigError("policy '" + to_string(c.controller.policy) + "' with learned durations needs --weights");
    const Network net = build_network(c);
    std::map<std::uint64_t, ParamStore> weights;
    if (c.learned()) weights = weights_per_seed(c, a.weights);
    for (std::uint64_t s : c.seeds) build_flow(c, net, s);
    echo_config(c);
    write_evaluation(c, evaluate_all(c, net, weights, out), out);
}

struct TransferArgs {
    ConfigArgs config;
    std::string target;
    std::string weights;
    std::string target_weights;
    double t_train = 0.0;
};

void transfer(const TransferArgs& a, std::ostream& out) {
    const ExperimentConfig source = a.config.load();
    if (!source.learned()) throw ConfigError("transfer needs a learned duration model");
    require_file(a.target, "target config");
    ExperimentConfig c = load_experiment_file(a.target);
    // Scenario from the target, controller and learning setup from the source.
    c.controller = source.controller;
    c.hp = source.hp;
    c.output_dir = source.output_dir;
    c.name = source.name;
    c.validate();
    if (a.weights.empty()) throw ConfigError("transfer needs --weights");
    if (a.t_train < 0.0) throw ConfigError("--t-train must be positive");

    const Network net = build_network(c);
    const auto weights = weights_per_seed(c, a.weights);
    std::map<std::uint64_t, ParamStore> direct;
    if (!a.target_weights.empty()) direct = weights_per_seed(c, a.target_weights);
    for (std::uint64_t s : c.seeds) build_flow(c, net, s);
    echo_config(c, "transfer.resolved.json");

    const std::string target_name = load_experiment_file(a.target).name;
    std::string csv = "source,target,seed,t_transfer,t_train,ratio\n";
    for (std::uint64_t s : c.seeds) {
        const SeedEvaluation moved = with_seed_context(s, [&] { return evaluate_seed(c, net, &weights.at(s), s); });
        double t_train = a.t_train;
        if (t_train == 0.0) {
            if (!direct.count(s)) {
                out << "seed " << s << ": training on the target for t_train\n";
                direct.emplace(s, with_seed_context(s, [&] { return train_seed(c, net, s).best; }));
            }
            const SeedEvaluation base = with_seed_context(s, [&] { return evaluate_seed(c, net, &direct.at(s), s); });
            if (!base.mean.aatt) throw DivisionDomain("seed " + std::to_string(s) + ": direct training has no AATT");
            t_train = *base.mean.aatt;
        }
        if (!moved.mean.aatt) throw DivisionDomain("seed " + std::to_string(s) + ": transferred run has no AATT");
        const double ratio = transfer_ratio(*moved.mean.aatt, t_train);
        char buf[160];
        std::snprintf(buf, sizeof buf, ",%llu,%.6f,%.6f,%.6f\n", static_cast<unsigned long long>(s), *moved.mean.aatt,
                      t_train, ratio);
        csv += source.name + "," + target_name + buf;
        out << "seed " << s << ": transfer ratio " << fmt(ratio) << "\n";
    }
    write_text_file(join(c.output_dir, "transfer.csv"), csv);
}

struct CycleArgs {
    ConfigArgs config;
    std::string weights;
    bool fine_tune = false;
};

void cycle(const CycleArgs& a, std::ostream& out) {
    ExperimentConfig c = a.config.load();
    c.controller.policy = PhaseRule::Cyclic;
    c.controller.duration = DurationMode::Learned;
    c.name += "-cycle";
    c.validate();
    if (a.weights.empty()) throw ConfigError("cycle needs pretrained --weights");
    if (c.controller.model.agent != AgentVariant::Full) throw ConfigError("cycle needs full-agent weights");
    const Network net = build_network(c);
    auto weights = weights_per_seed(c, a.weights);
    for (std::uint64_t s : c.seeds) build_flow(c, net, s);
    echo_config(c);

    if (a.fine_tune) {
        for (std::uint64_t s : c.seeds) {
            const TrainingResult r = with_seed_context(s, [&] { return train_seed(c, net, s, weights.at(s)); });
            weights.at(s) = r.best;
            save_params_file(r.best, join(c.output_dir, "weights_cycle_seed" + std::to_string(s) + ".bin"));
            write_text_file(join(c.output_dir, "train_cycle_seed" + std::to_string(s) + ".csv"), training_csv(r.episodes));
            out << "seed " << s << ": fine-tuned, best aatt " << (r.best_aatt ? fmt(*r.best_aatt) : "n/a") << "\n";
        }
    }
    const auto runs = evaluate_all(c, net, weights, out);
    bool cyclic = true;
    for (std::uint64_t s : c.seeds) {
        auto ctrl = make_controller(c, &weights.at(s));
        cyclic = cyclic && decisions_cyclic(net, run_episode(net, build_flow(c, net, s), *ctrl, {c.horizon, true, c.sim}));
    }
    if (!cyclic) throw Error("decision log is not cyclic");
    write_evaluation(c, runs, out);
    out << "phase sequence cyclic: yes\n";
}

struct CompareArgs {
    std::vector<std::string> reports;
    std::string baseline;
    std::string output = "comparison.csv";
};

void compare_reports(const CompareArgs& a, std::ostream& out) {
    std::vector<std::pair<std::string, EvalReport>> rows;
    for (const std::string& path : a.reports) {
        require_file(path, "report");
        json doc;
        try {
            doc = json::parse(read_file_bytes(path));
        } catch (const json::parse_error&) {
            throw SchemaError("report '" + path + "' is not valid JSON");
        }
        if (!doc.contains("method") || !doc.contains("aatt_mean"))
            throw SchemaError("report '" + path + "' lacks method or aatt_mean");
        EvalReport r;
        if (doc["aatt_mean"].is_number()) r.aatt = doc["aatt_mean"].get<double>();
        rows.emplace_back(doc["method"].get<std::string>(), r);
    }
    const std::string csv = comparison_csv(compare(rows, a.baseline));
    write_text_file(resolve_output_dir(a.output), csv);
    out << csv;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Traffic signal duration control benchmark", "tscbench"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "Generate road network or flow files");
    gen->require_subcommand(1);
    GenNetArgs net_args;
    auto* gen_net_cmd = gen->add_subcommand("net", "Grid road network");
    gen_net_cmd->add_option("--grid", net_args.grid, "ROWSxCOLS")->capture_default_str();
    gen_net_cmd->add_option("--preset", net_args.preset, "Intersection preset A|B|C|D")->capture_default_str();
    gen_net_cmd->add_option("--ew", net_args.ew, "East-west road length (m)")->capture_default_str();
    gen_net_cmd->add_option("--ns", net_args.ns, "North-south road length (m)")->capture_default_str();
    gen_net_cmd->add_option("-o,--output", net_args.output, "Output file")->capture_default_str();

    GenFlowArgs flow_args;
    auto* gen_flow_cmd = gen->add_subcommand("flow", "Poisson flow over a road network");
    gen_flow_cmd->add_option("--net", flow_args.net, "Road network file")->required();
    gen_flow_cmd->add_option("--rate", flow_args.rate, "Vehicles per second per entry road")->capture_default_str();
    gen_flow_cmd->add_option("--seed", flow_args.seed, "Random seed")->capture_default_str();
    gen_flow_cmd->add_option("--horizon", flow_args.horizon, "Injection window (s)")->capture_default_str();
    gen_flow_cmd->add_option("--left", flow_args.turns.left, "Left-turn ratio")->capture_default_str();
    gen_flow_cmd->add_option("--straight", flow_args.turns.straight, "Straight ratio")->capture_default_str();
    gen_flow_cmd->add_option("--right", flow_args.turns.right, "Right-turn ratio")->capture_default_str();
    gen_flow_cmd->add_option("-o,--output", flow_args.output, "Output file")->capture_default_str();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train the duration agent, one run per seed");
    train_args.config.add_to(*train_cmd);
    train_cmd->add_flag("--resume", train_args.resume, "Warm start from weights already in the output directory");
    train_cmd->add_option("--init", train_args.init, "Warm start from this weight file ({seed} is substituted)");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a controller on drained episodes");
    eval_args.config.add_to(*eval_cmd);
    eval_cmd->add_option("-w,--weights", eval_args.weights, "Weight file for learned durations ({seed} is substituted)");

    TransferArgs transfer_args;
    auto* transfer_cmd = app.add_subcommand("transfer", "Evaluate trained weights on another scenario");
    transfer_args.config.add_to(*transfer_cmd);
    transfer_cmd->add_option("--target", transfer_args.target, "Config of the target scenario")->required();
    transfer_cmd->add_option("-w,--weights", transfer_args.weights, "Source weights ({seed} is substituted)");
    transfer_cmd->add_option("--target-weights", transfer_args.target_weights,
                             "Weights trained on the target; their AATT is t_train");
    transfer_cmd->add_option("--t-train", transfer_args.t_train, "Known AATT of direct training on the target");

    CycleArgs cycle_args;
    auto* cycle_cmd = app.add_subcommand("cycle", "Cyclic phases with transferred learned durations");
    cycle_args.config.add_to(*cycle_cmd);
    cycle_cmd->add_option("-w,--weights", cycle_args.weights, "Pretrained full-agent weights ({seed} is substituted)");
    cycle_cmd->add_flag("--fine-tune", cycle_args.fine_tune, "Train the duration model further under cyclic phases");

    CompareArgs compare_args;
    auto* compare_cmd = app.add_subcommand("compare", "Table of AATT and improvement over a baseline");
    compare_cmd->add_option("reports", compare_args.reports, "report.json files from eval or cycle")->required();
    compare_cmd->add_option("--baseline", compare_args.baseline, "Method name of the baseline")->required();
    compare_cmd->add_option("-o,--output", compare_args.output, "Output CSV")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitInvalid;
    }

    try {
        if (gen_net_cmd->parsed()) gen_net(net_args, out);
        else if (gen_flow_cmd->parsed()) gen_flow(flow_args, out);
        else if (train_cmd->parsed()) train(train_args, out);
        else if (eval_cmd->parsed()) eval(eval_args, out);
        else if (transfer_cmd->parsed()) transfer(transfer_args, out);
        else if (cycle_cmd->parsed()) cycle(cycle_args, out);
        else if (compare_cmd->parsed()) compare_reports(compare_args, out);
    } catch (const ConfigError& e) {
        err << "invalid configuration: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const SchemaError& e) {
        err << "invalid input: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const TopologyError& e) {
        err << "invalid road network: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const UnknownPreset& e) {
        err << "invalid configuration: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const RouteError& e) {
        err << "invalid flow: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const ShapeMismatch& e) {
        err << "incompatible weights: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

} // namespace tsc::cli
