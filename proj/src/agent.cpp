#include "tsc/agent.hpp"

#include <algorithm>
#include <cmath>

#include "tsc/errors.hpp"
#include "tsc/metrics.hpp"

namespace tsc {

void ModelConfig::validate() const {
    if (network < 1 || network > 3) throw ConfigError("network variant must be 1, 2 or 3");
    const int f = static_cast<int>(fusion);
    if (f < 1 || f > 4) throw ConfigError("fusion method must be 1 to 4");
    if (agent == AgentVariant::Lite) {
        if (network != 1) throw ConfigError("the lite agent only has the selected-phase network");
        if (fusion != Fusion::Sum) throw ConfigError("the lite agent pools lanes by summation");
        if (per_feature_embedding) throw ConfigError("the lite agent has a single lane embedding");
    }
}

ModelConfig ModelConfig::lite() {
    ModelConfig c;
    c.agent = AgentVariant::Lite;
    c.fusion = Fusion::Sum;
    return c;
}

std::vector<std::string> lite_embedding_names() { return {"lite.we", "lite.be"}; }
std::vector<std::string> lite_output_names() { return {"lite.wc", "lite.bc"}; }

namespace {

void add_dense(ParamStore& store, const std::string& w, const std::string& b, int in, int out, Rng& rng) {
    Matrix wm(in, out), bm(1, out);
    init_uniform(wm, static_cast<std::size_t>(in), rng);
    init_uniform(bm, static_cast<std::size_t>(in), rng);
    store.add(w, std::move(wm));
    store.add(b, std::move(bm));
}

std::string embed_name(const char* leaf, const ModelConfig& c, int k) {
    return c.per_feature_embedding ? std::string("embed.") + leaf + std::to_string(k) : std::string("embed.") + leaf;
}

} // namespace

ParamStore make_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    ParamStore store;
    if (config.agent == AgentVariant::Lite) {
        add_dense(store, "lite.we", "lite.be", 4, 1, rng);
        add_dense(store, "lite.wc", "lite.bc", 1, static_cast<int>(kDurationSpace.size()), rng);
        return store;
    }
    const int embeddings = config.per_feature_embedding ? 4 : 1;
    // Segment counts reach a dozen or more, so the embedding weights start
    // narrow to keep the sigmoid out of saturation.
    for (int k = 0; k < embeddings; ++k) {
        add_dense(store, embed_name("w", config, k), embed_name("b", config, k), 1, kEmbedDim, rng);
        store.at(embed_name("w", config, k)) *= 0.1;
    }
    switch (config.fusion) {
    case Fusion::AttentionMean:
    case Fusion::MeanQuery: add_attention_params(store, "lane_attn", kLaneDim, rng); break;
    case Fusion::ConcatEmbed:
        add_dense(store, "concat.w", "concat.b", kLaneDim * kMaxConcatLanes, kLaneDim, rng);
        break;
    case Fusion::Sum: break;
    }
    if (config.network == 3) add_attention_params(store, "phase_attn", kLaneDim, rng);
    add_dense(store, "phase.w", "phase.b", kLaneDim, kPhaseDim, rng);
    add_dense(store, "head.wv", "head.bv", kPhaseDim, 1, rng);
    add_dense(store, "head.wa", "head.ba", kPhaseDim, static_cast<int>(kDurationSpace.size()), rng);
    return store;
}

DurationState extract_state(const Intersection& inter, const LaneObservations& obs, int phase) {
    if (phase < 0 || phase >= static_cast<int>(inter.phases.size()))
        throw InvalidPhase("phase " + std::to_string(phase) + " does not exist at '" + inter.id + "'");
    DurationState s;
    s.phase = phase;
    std::unordered_map<LaneIndex, std::size_t> slot;
    for (LaneIndex l : inter.incoming_lanes) {
        auto it = obs.find(l);
        if (it == obs.end()) throw MissingLane("no observation for incoming lane " + std::to_string(l));
        slot[l] = s.lanes.size();
        std::array<double, 4> x{};
        for (int k = 0; k < 4; ++k) x[k] = it->second.segments[k];
        s.lanes.push_back(x);
    }
    for (const Phase& p : inter.phases) {
        std::vector<std::size_t> idx;
        for (LaneIndex l : p.participating_lanes) idx.push_back(slot.at(l));
        s.phase_lanes.push_back(std::move(idx));
    }
    return s;
}

DurationState extract_state(const World& world, IntersectionIndex i, int phase) {
    const Intersection& inter = world.network().intersection(i);
    LaneObservations obs;
    for (LaneIndex l : inter.incoming_lanes) obs[l] = world.observe_lane(l);
    return extract_state(inter, obs, phase);
}

namespace {

Matrix lane_matrix(const DurationState& s, const std::vector<std::size_t>& rows) {
    Matrix x(static_cast<Eigen::Index>(rows.size()), 4);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < 4; ++c) x(static_cast<Eigen::Index>(r), c) = s.lanes.at(rows[r])[c];
    return x;
}

void check_phase(const DurationState& s, int phase) {
    if (phase < 0 || static_cast<std::size_t>(phase) >= s.phase_lanes.size())
        throw InvalidPhase("state has no phase " + std::to_string(phase));
    if (s.phase_lanes[static_cast<std::size_t>(phase)].empty())
        throw EmptyPhase("phase " + std::to_string(phase) + " has no participating lanes");
}

// n x 16 lane features: each characteristic embedded to 4 dims, concatenated.
Var lane_features(Tape& tape, const ModelConfig& c, Var x) {
    std::vector<Var> parts;
    for (int k = 0; k < 4; ++k) {
        const Var col = tape.slice_cols(x, static_cast<std::size_t>(k), 1);
        parts.push_back(dense(tape, col, embed_name("w", c, k), embed_name("b", c, k), Activation::Sigmoid));
    }
    return tape.concat_cols(parts);
}

Var fuse(Tape& tape, const ModelConfig& c, Var lanes) {
    switch (c.fusion) {
    case Fusion::AttentionMean: return mhsa_mean(tape, lanes, "lane_attn", kHeads);
    case Fusion::MeanQuery: {
        const Var mean = tape.mean_rows(lanes);
        return attention(tape, mean, tape.concat_rows({mean, lanes}), "lane_attn", kHeads);
    }
    case Fusion::ConcatEmbed: {
        const auto n = static_cast<std::size_t>(tape.value(lanes).rows());
        if (n > static_cast<std::size_t>(kMaxConcatLanes))
            throw ShapeError("concatenation fusion takes at most " + std::to_string(kMaxConcatLanes) + " lanes");
        std::vector<Var> parts;
        for (std::size_t r = 0; r < n; ++r) parts.push_back(tape.row(lanes, r));
        if (n < static_cast<std::size_t>(kMaxConcatLanes))
            parts.push_back(tape.constant(Matrix::Zero(1, static_cast<Eigen::Index>((kMaxConcatLanes - n) * kLaneDim))));
        return dense(tape, tape.concat_cols(parts), "concat.w", "concat.b", Activation::Relu);
    }
    case Fusion::Sum: return tape.sum_rows(lanes);
    }
    throw ConfigError("unknown fusion method");
}

Var head(Tape& tape, Var features) {
    return dueling_head(tape, dense(tape, features, "phase.w", "phase.b", Activation::Relu), "head");
}

Var lite_forward(Tape& tape, const DurationState& s) {
    check_phase(s, s.phase);
    const Var x = tape.constant(lane_matrix(s, s.phase_lanes[static_cast<std::size_t>(s.phase)]));
    const Var h = dense(tape, x, "lite.we", "lite.be", Activation::Sigmoid);
    return dense(tape, tape.sum_rows(h), "lite.wc", "lite.bc", Activation::Relu);
}

} // namespace

Var q_forward(Tape& tape, const ModelConfig& config, const DurationState& state) {
    if (config.agent == AgentVariant::Lite) return lite_forward(tape, state);
    if (config.network == 1) {
        check_phase(state, state.phase);
        const Var x = tape.constant(lane_matrix(state, state.phase_lanes[static_cast<std::size_t>(state.phase)]));
        return head(tape, fuse(tape, config, lane_features(tape, config, x)));
    }
    // Embed every incoming lane once, then gather each phase's rows.
    std::vector<std::size_t> all(state.lanes.size());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    const Var h = lane_features(tape, config, tape.constant(lane_matrix(state, all)));
    std::vector<Var> phase_features;
    for (std::size_t p = 0; p < state.phase_lanes.size(); ++p) {
        check_phase(state, static_cast<int>(p));
        std::vector<Var> rows;
        for (std::size_t l : state.phase_lanes[p]) rows.push_back(tape.row(h, l));
        phase_features.push_back(fuse(tape, config, tape.concat_rows(rows)));
    }
    Var f = tape.concat_rows(phase_features);
    if (config.network == 3) f = attention(tape, f, f, "phase_attn", kHeads);
    return head(tape, f);
}

Var q_selected_forward(Tape& tape, const ModelConfig& config, const DurationState& state) {
    const Var q = q_forward(tape, config, state);
    if (config.agent == AgentVariant::Lite || config.network == 1) return q;
    return tape.row(q, static_cast<std::size_t>(state.phase));
}

Matrix q_values(const ModelConfig& config, const ParamStore& params, const DurationState& state) {
    Tape tape(params);
    return tape.value(q_forward(tape, config, state));
}

Matrix q_selected(const ModelConfig& config, const ParamStore& params, const DurationState& state) {
    Tape tape(params);
    return tape.value(q_selected_forward(tape, config, state));
}

DurationChoice select_duration(const Matrix& q, double epsilon, Rng& rng, const std::vector<int>& space) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    if (space.empty() || static_cast<std::size_t>(q.size()) != space.size())
        throw ShapeError("q-values do not match the duration space");
    int index = 0;
    if (epsilon > 0.0 && uniform01(rng) < epsilon) {
        index = static_cast<int>(uniform_index(rng, space.size()));
    } else {
        for (Eigen::Index k = 1; k < q.size(); ++k)
            if (q.data()[k] > q.data()[index]) index = static_cast<int>(k);
    }
    return {index, space[static_cast<std::size_t>(index)]};
}

double compute_reward(const World& world, IntersectionIndex i, RewardKind kind) {
    switch (kind) {
    case RewardKind::Queue: return -static_cast<double>(world.intersection_queue(i));
    case RewardKind::Pressure: return pressure_reward(world.network(), i, world.queue_map(i), false);
    case RewardKind::PressurePerMovement: return pressure_reward(world.network(), i, world.queue_map(i), true);
    }
    return 0.0;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    if (t.action < 0 || t.action >= static_cast<int>(kDurationSpace.size()))
        throw ShapeError("duration action out of range");
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
    std::vector<std::size_t> idx(items_.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    n = std::min(n, idx.size());
    for (std::size_t k = 0; k < n; ++k) std::swap(idx[k], idx[k + uniform_index(rng, idx.size() - k)]);
    idx.resize(n);
    return idx;
}

void Hyperparams::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch == 0 || sample_size == 0 || buffer_capacity == 0) throw ConfigError("batch sizes must be positive");
    if (epochs <= 0 || patience <= 0) throw ConfigError("epochs and patience must be positive");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0) || !(epsilon_floor >= 0.0 && epsilon_floor <= 1.0) ||
        !(epsilon_decay > 0.0 && epsilon_decay <= 1.0))
        throw ConfigError("epsilon schedule out of range");
    if (!(reward_scale > 0.0)) throw ConfigError("reward scale must be positive");
}

double Hyperparams::epsilon_at(int episode) const {
    return std::max(epsilon_floor, epsilon_start * std::pow(epsilon_decay, episode));
}

double train_round(const ReplayBuffer& buffer, const ModelConfig& config, ParamStore& params, const ParamStore& target,
                   Adam& optimizer, const Hyperparams& hp, Rng& rng) {
    if (buffer.size() == 0) throw EmptyBuffer("replay buffer is empty");
    const std::vector<std::size_t> picked = buffer.sample_indices(hp.sample_size, rng);

    std::vector<double> y(picked.size());
    for (std::size_t k = 0; k < picked.size(); ++k) {
        const Transition& t = buffer.at(picked[k]);
        y[k] = t.reward;
        if (!t.terminal) y[k] += hp.gamma * q_selected(config, target, t.next).maxCoeff();
    }

    GradStore grads = params.zeros_like();
    double total = 0.0;
    for (std::size_t start = 0; start < picked.size(); start += hp.batch) {
        const std::size_t end = std::min(picked.size(), start + hp.batch);
        const double n = static_cast<double>(end - start);
        grads.set_zero();
        for (std::size_t k = start; k < end; ++k) {
            const Transition& t = buffer.at(picked[k]);
            Tape tape(params);
            const Var q = q_selected_forward(tape, config, t.state);
            const double err = tape.value(q)(0, t.action) - y[k];
            total += err * err;
            Matrix seed = Matrix::Zero(1, tape.value(q).cols());
            seed(0, t.action) = 2.0 * err / n;
            tape.backward(q, seed, grads);
        }
        optimizer.step(params, grads);
    }
    return total / static_cast<double>(picked.size());
}

// ---------------------------------------------------------------------------

DqnDuration::DqnDuration(ModelConfig config, const ParamStore& params, double epsilon, std::uint64_t seed,
                         ReplayBuffer* buffer, RewardKind reward, double reward_scale, RewardTiming timing)
    : config_(config), params_(&params), epsilon_(epsilon), rng_(seed), buffer_(buffer), reward_(reward),
      reward_scale_(reward_scale), timing_(timing) {
    config_.validate();
}

void DqnDuration::reset(const World& world) {
    const std::size_t n = world.network().intersections().size();
    pending_.assign(n, std::nullopt);
    reward_sum_.assign(n, 0.0);
    reward_count_.assign(n, 0);
}

void DqnDuration::observe(const World& world, IntersectionIndex i) {
    if (!buffer_ || timing_ != RewardTiming::Averaged || !pending_.at(i)) return;
    reward_sum_[i] += compute_reward(world, i, reward_);
    ++reward_count_[i];
}

int DqnDuration::choose_duration(const World& world, IntersectionIndex i, int phase) {
    DurationState state = extract_state(world, i, phase);
    if (buffer_ && pending_.at(i)) {
        const double r = timing_ == RewardTiming::Averaged && reward_count_[i] > 0
                             ? reward_sum_[i] / reward_count_[i]
                             : compute_reward(world, i, reward_);
        buffer_->push({std::move(pending_[i]->state), pending_[i]->action, reward_scale_ * r, state, false, i});
    }
    if (buffer_) {
        reward_sum_.at(i) = 0.0;
        reward_count_.at(i) = 0;
    }
    const DurationChoice choice = select_duration(q_selected(config_, *params_, state), epsilon_, rng_);
    pending_.at(i) = Pending{std::move(state), choice.index};
    return choice.seconds;
}

MaxStateValuePhase::MaxStateValuePhase(ModelConfig config, const ParamStore& params)
    : config_(config), params_(&params) {
    if (config_.agent != AgentVariant::Full || config_.network != 3)
        throw ConfigError("max state-value phase control needs the phase-attention network");
}

int MaxStateValuePhase::choose_phase(const World& world, IntersectionIndex i, int) {
    return max_state_value_phase(q_values(config_, *params_, extract_state(world, i, 0)));
}

std::shared_ptr<PhasePolicy> make_phase_policy(PhaseRule rule, const ModelConfig& config, const ParamStore& params) {
    switch (rule) {
    case PhaseRule::FixedTime:
    case PhaseRule::Cyclic: return std::make_shared<CyclicPhase>();
    case PhaseRule::MaxQueue: return std::make_shared<MaxQueuePhase>();
    case PhaseRule::EfficientPressure: return std::make_shared<EfficientPressurePhase>();
    case PhaseRule::MaxStateValue: return std::make_shared<MaxStateValuePhase>(config, params);
    }
    throw ConfigError("unknown phase rule");
}

void validate_pairing(PhaseRule rule, RewardKind reward) {
    const bool pressure = reward != RewardKind::Queue;
    if (rule == PhaseRule::MaxQueue && pressure)
        throw ConfigError("max-queue phase control pairs with the queue-length reward");
    if (rule == PhaseRule::EfficientPressure && !pressure)
        throw ConfigError("efficient max-pressure phase control pairs with the absolute-pressure reward");
}

std::unique_ptr<TwoStageController> make_learned_controller(PhaseRule rule, const ModelConfig& config,
                                                            const ParamStore& params) {
    return std::make_unique<TwoStageController>(make_phase_policy(rule, config, params),
                                                std::make_shared<DqnDuration>(config, params, 0.0, 0));
}

ParamStore load_weights(const ModelConfig& config, std::string_view bytes) {
    ParamStore store = make_params(config, 0);
    load_params_into(store, bytes);
    return store;
}

TrainingResult run_training(const Network& net, const FlowSet& flow, const TrainingConfig& config,
                            const std::function<void(const EpisodeMetrics&)>& progress) {
    config.model.validate();
    config.hp.validate();
    validate_pairing(config.phase_rule, config.reward);
    if (config.model.network == 1 && config.phase_rule == PhaseRule::MaxStateValue)
        throw ConfigError("max state-value phase control needs network 3");

    ParamStore params = config.initial ? *config.initial : make_params(config.model, config.seed);
    if (!params.same_layout(make_params(config.model, 0))) throw ShapeMismatch("initial weights do not fit the model");
    Adam optimizer(params, config.hp.lr);
    ReplayBuffer buffer(config.hp.buffer_capacity);
    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainingResult result;
    result.best = params;
    int stale = 0;
    for (int episode = 0; episode < config.hp.epochs; ++episode) {
        EpisodeMetrics m;
        m.episode = episode;
        m.epsilon = config.hp.epsilon_at(episode);

        auto explorer = std::make_shared<DqnDuration>(config.model, params, m.epsilon, rng(), &buffer, config.reward,
                                                      config.hp.reward_scale, config.timing);
        TwoStageController train_ctrl(make_phase_policy(config.phase_rule, config.model, params), explorer);
        EpisodeOptions train_opt{config.horizon, false, config.sim};
        run_episode(net, flow, train_ctrl, train_opt);

        if (buffer.size() > 0) {
            const ParamStore target = params;
            m.loss = train_round(buffer, config.model, params, target, optimizer, config.hp, rng);
        }

        auto greedy = make_learned_controller(config.phase_rule, config.model, params);
        EpisodeOptions eval_opt{config.horizon, true, config.sim};
        const EvalReport report = make_report(run_episode(net, flow, *greedy, eval_opt));
        m.aatt = report.aatt;
        m.throughput = report.throughput;
        result.episodes.push_back(m);
        if (progress) progress(m);

        const bool improved = m.aatt && (!result.best_aatt || *m.aatt < *result.best_aatt);
        if (improved) {
            result.best_aatt = m.aatt;
            result.best = params;
            stale = 0;
        } else if (m.aatt || result.best_aatt) {
            if (++stale >= config.hp.patience) break;
        }
    }
    if (!result.best_aatt) result.best = params;
    return result;
}

} // namespace tsc
