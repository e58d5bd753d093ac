#include "tsc/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tsc/errors.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// ParamStore

void ParamStore::add(const std::string& name, Matrix value) {
    if (contains(name)) throw ShapeError("parameter '" + name + "' already exists");
    names_.push_back(name);
    values_.push_back(std::move(value));
}

bool ParamStore::contains(std::string_view name) const {
    for (const auto& n : names_)
        if (n == name) return true;
    return false;
}

std::size_t ParamStore::index_of(std::string_view name) const {
    for (std::size_t k = 0; k < names_.size(); ++k)
        if (names_[k] == name) return k;
    throw ShapeError("no parameter named '" + std::string(name) + "'");
}

ParamStore ParamStore::zeros_like() const {
    ParamStore out;
    for (std::size_t k = 0; k < names_.size(); ++k)
        out.add(names_[k], Matrix::Zero(values_[k].rows(), values_[k].cols()));
    return out;
}

bool ParamStore::same_layout(const ParamStore& other) const {
    if (names_ != other.names_) return false;
    for (std::size_t k = 0; k < values_.size(); ++k) {
        if (values_[k].rows() != other.values_[k].rows() || values_[k].cols() != other.values_[k].cols())
            return false;
    }
    return true;
}

void ParamStore::set_zero() {
    for (Matrix& m : values_) m.setZero();
}

bool ParamStore::operator==(const ParamStore& other) const {
    if (!same_layout(other)) return false;
    for (std::size_t k = 0; k < values_.size(); ++k)
        if (values_[k] != other.values_[k]) return false;
    return true;
}

std::size_t count_params(const ParamStore& store) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < store.size(); ++k) n += static_cast<std::size_t>(store.at(k).size());
    return n;
}

std::size_t count_params(const ParamStore& store, const std::vector<std::string>& names) {
    std::size_t n = 0;
    for (const auto& name : names) n += static_cast<std::size_t>(store.at(name).size());
    return n;
}

void init_uniform(Matrix& m, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = (2.0 * uniform01(rng) - 1.0) * bound;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape(const ParamStore& params) : params_(&params) { nodes_.reserve(256); }

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return {nodes_.size() - 1};
}

Var Tape::param(std::string_view name) {
    const std::size_t idx = params_->index_of(name);
    return push({Op::Param, params_->at(idx), {}, idx, 0.0});
}

Var Tape::constant(Matrix value) { return push({Op::Constant, std::move(value), {}, 0, 0.0}); }

Var Tape::matmul(Var a, Var b) {
    if (val(a).cols() != val(b).rows())
        throw ShapeError("matmul " + std::to_string(val(a).rows()) + "x" + std::to_string(val(a).cols()) + " by " +
                         std::to_string(val(b).rows()) + "x" + std::to_string(val(b).cols()));
    Matrix out = val(a) * val(b);
    return push({Op::MatMul, std::move(out), {a.id, b.id}, 0, 0.0});
}

Var Tape::add(Var a, Var b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols()) throw ShapeError("add: shape mismatch");
    Matrix out = val(a) + val(b);
    return push({Op::Add, std::move(out), {a.id, b.id}, 0, 0.0});
}

Var Tape::add_row(Var a, Var b) {
    if (val(b).rows() != 1 || val(b).cols() != val(a).cols()) throw ShapeError("add_row: bias shape mismatch");
    Matrix out = val(a).rowwise() + val(b).row(0);
    return push({Op::AddRow, std::move(out), {a.id, b.id}, 0, 0.0});
}

Var Tape::activate(Var a, Activation act) {
    switch (act) {
    case Activation::Identity: return a;
    case Activation::Sigmoid: {
        Matrix out = val(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
        return push({Op::Sigmoid, std::move(out), {a.id}, 0, 0.0});
    }
    case Activation::Relu: {
        Matrix out = val(a).cwiseMax(0.0);
        return push({Op::Relu, std::move(out), {a.id}, 0, 0.0});
    }
    }
    return a;
}

Var Tape::softmax_rows(Var a) {
    Matrix out = val(a);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        out.row(r).array() -= out.row(r).maxCoeff();
        out.row(r) = out.row(r).array().exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return push({Op::Softmax, std::move(out), {a.id}, 0, 0.0});
}

Var Tape::transpose(Var a) {
    Matrix out = val(a).transpose();
    return push({Op::Transpose, std::move(out), {a.id}, 0, 0.0});
}

Var Tape::scale(Var a, double s) {
    Matrix out = val(a) * s;
    return push({Op::Scale, std::move(out), {a.id}, 0, s});
}

Var Tape::mean_rows(Var a) {
    if (val(a).rows() == 0) throw EmptySet("mean over an empty set");
    Matrix out = val(a).colwise().mean();
    return push({Op::MeanRows, std::move(out), {a.id}, 0, 0.0});
}

Var Tape::sum_rows(Var a) {
    Matrix out = val(a).colwise().sum();
    return push({Op::SumRows, std::move(out), {a.id}, 0, 0.0});
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    const Eigen::Index rows = val(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
        if (val(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
        cols += val(p).cols();
    }
    Matrix out(rows, cols);
    Eigen::Index c = 0;
    std::vector<std::size_t> ids;
    for (Var p : parts) {
        out.middleCols(c, val(p).cols()) = val(p);
        c += val(p).cols();
        ids.push_back(p.id);
    }
    return push({Op::ConcatCols, std::move(out), std::move(ids), 0, 0.0});
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    const Eigen::Index cols = val(parts[0]).cols();
    Eigen::Index rows = 0;
    for (Var p : parts) {
        if (val(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
        rows += val(p).rows();
    }
    Matrix out(rows, cols);
    Eigen::Index r = 0;
    std::vector<std::size_t> ids;
    for (Var p : parts) {
        out.middleRows(r, val(p).rows()) = val(p);
        r += val(p).rows();
        ids.push_back(p.id);
    }
    return push({Op::ConcatRows, std::move(out), std::move(ids), 0, 0.0});
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
    if (start + count > static_cast<std::size_t>(val(a).cols())) throw ShapeError("slice_cols out of range");
    Matrix out = val(a).middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
    return push({Op::SliceCols, std::move(out), {a.id}, start, 0.0});
}

Var Tape::row(Var a, std::size_t r) {
    if (r >= static_cast<std::size_t>(val(a).rows())) throw ShapeError("row out of range");
    Matrix out = val(a).row(static_cast<Eigen::Index>(r));
    return push({Op::Row, std::move(out), {a.id}, r, 0.0});
}

Var Tape::dueling(Var v, Var a) {
    if (val(v).cols() != 1 || val(v).rows() != val(a).rows()) throw ShapeError("dueling: shape mismatch");
    Matrix out = val(a);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double shift = val(v)(r, 0) - out.row(r).mean();
        out.row(r).array() += shift;
    }
    return push({Op::Dueling, std::move(out), {v.id, a.id}, 0, 0.0});
}

void Tape::backward(Var out, const Matrix& seed, GradStore& grads) {
    if (seed.rows() != val(out).rows() || seed.cols() != val(out).cols()) throw ShapeError("backward: seed shape");
    std::vector<Matrix> g(out.id + 1);
    g[out.id] = seed;
    auto acc = [&](std::size_t id, const auto& expr) {
        if (g[id].size() == 0) g[id] = expr;
        else g[id] += expr;
    };
    for (std::size_t k = out.id + 1; k-- > 0;) {
        if (g[k].size() == 0) continue;
        const Node& n = nodes_[k];
        const Matrix& dy = g[k];
        switch (n.op) {
        case Op::Param: {
            Matrix& target = grads.at(n.aux);
            if (target.rows() != dy.rows() || target.cols() != dy.cols()) throw ShapeError("gradient store layout");
            target += dy;
            break;
        }
        case Op::Constant: break;
        case Op::MatMul:
            acc(n.inputs[0], dy * nodes_[n.inputs[1]].value.transpose());
            acc(n.inputs[1], nodes_[n.inputs[0]].value.transpose() * dy);
            break;
        case Op::Add:
            acc(n.inputs[0], dy);
            acc(n.inputs[1], dy);
            break;
        case Op::AddRow:
            acc(n.inputs[0], dy);
            acc(n.inputs[1], Matrix(dy.colwise().sum()));
            break;
        case Op::Sigmoid:
            acc(n.inputs[0], Matrix(dy.array() * n.value.array() * (1.0 - n.value.array())));
            break;
        case Op::Relu:
            acc(n.inputs[0], Matrix(dy.array() * (n.value.array() > 0.0).cast<double>()));
            break;
        case Op::Softmax: {
            Matrix dx(dy.rows(), dy.cols());
            for (Eigen::Index r = 0; r < dy.rows(); ++r) {
                const double dot = dy.row(r).dot(n.value.row(r));
                dx.row(r) = (n.value.row(r).array() * (dy.row(r).array() - dot)).matrix();
            }
            acc(n.inputs[0], dx);
            break;
        }
        case Op::Transpose: acc(n.inputs[0], Matrix(dy.transpose())); break;
        case Op::Scale: acc(n.inputs[0], Matrix(dy * n.scalar)); break;
        case Op::MeanRows: {
            const Eigen::Index rows = nodes_[n.inputs[0]].value.rows();
            acc(n.inputs[0], Matrix(dy.replicate(rows, 1) / static_cast<double>(rows)));
            break;
        }
        case Op::SumRows: {
            const Eigen::Index rows = nodes_[n.inputs[0]].value.rows();
            acc(n.inputs[0], Matrix(dy.replicate(rows, 1)));
            break;
        }
        case Op::ConcatCols: {
            Eigen::Index c = 0;
            for (std::size_t id : n.inputs) {
                const Eigen::Index w = nodes_[id].value.cols();
                acc(id, Matrix(dy.middleCols(c, w)));
                c += w;
            }
            break;
        }
        case Op::ConcatRows: {
            Eigen::Index r = 0;
            for (std::size_t id : n.inputs) {
                const Eigen::Index h = nodes_[id].value.rows();
                acc(id, Matrix(dy.middleRows(r, h)));
                r += h;
            }
            break;
        }
        case Op::SliceCols: {
            const Matrix& src = nodes_[n.inputs[0]].value;
            Matrix dx = Matrix::Zero(src.rows(), src.cols());
            dx.middleCols(static_cast<Eigen::Index>(n.aux), dy.cols()) = dy;
            acc(n.inputs[0], dx);
            break;
        }
        case Op::Row: {
            const Matrix& src = nodes_[n.inputs[0]].value;
            Matrix dx = Matrix::Zero(src.rows(), src.cols());
            dx.row(static_cast<Eigen::Index>(n.aux)) = dy;
            acc(n.inputs[0], dx);
            break;
        }
        case Op::Dueling: {
            acc(n.inputs[0], Matrix(dy.rowwise().sum()));
            Matrix da = dy;
            for (Eigen::Index r = 0; r < da.rows(); ++r) da.row(r).array() -= dy.row(r).mean();
            acc(n.inputs[1], da);
            break;
        }
        }
    }
}

// ---------------------------------------------------------------------------
// Layers

Var dense(Tape& tape, Var x, std::string_view w, std::string_view b, Activation act) {
    return tape.activate(tape.add_row(tape.matmul(x, tape.param(w)), tape.param(b)), act);
}

namespace {
std::string join(std::string_view prefix, const char* leaf) { return std::string(prefix) + "." + leaf; }
} // namespace

Var attention(Tape& tape, Var queries, Var keys_values, std::string_view prefix, int heads) {
    const Var q = dense(tape, queries, join(prefix, "wq"), join(prefix, "bq"), Activation::Identity);
    const Var k = dense(tape, keys_values, join(prefix, "wk"), join(prefix, "bk"), Activation::Identity);
    const Var v = dense(tape, keys_values, join(prefix, "wv"), join(prefix, "bv"), Activation::Identity);
    const std::size_t dim = static_cast<std::size_t>(tape.value(q).cols());
    if (heads <= 0 || dim % static_cast<std::size_t>(heads) != 0) throw ShapeError("model width not divisible by heads");
    const std::size_t hd = dim / static_cast<std::size_t>(heads);
    const double s = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<Var> outs;
    for (int h = 0; h < heads; ++h) {
        const std::size_t start = static_cast<std::size_t>(h) * hd;
        const Var qh = tape.slice_cols(q, start, hd);
        const Var kh = tape.slice_cols(k, start, hd);
        const Var vh = tape.slice_cols(v, start, hd);
        const Var weights = tape.softmax_rows(tape.scale(tape.matmul(qh, tape.transpose(kh)), s));
        outs.push_back(tape.matmul(weights, vh));
    }
    return dense(tape, tape.concat_cols(outs), join(prefix, "wo"), join(prefix, "bo"), Activation::Identity);
}

Var mhsa_mean(Tape& tape, Var set, std::string_view prefix, int heads) {
    if (tape.value(set).rows() == 0) throw EmptySet("attention over an empty set");
    return tape.mean_rows(attention(tape, set, set, prefix, heads));
}

void add_attention_params(ParamStore& store, std::string_view prefix, int dim, Rng& rng) {
    for (const char* p : {"q", "k", "v", "o"}) {
        Matrix w(dim, dim), b(1, dim);
        init_uniform(w, static_cast<std::size_t>(dim), rng);
        init_uniform(b, static_cast<std::size_t>(dim), rng);
        store.add(std::string(prefix) + ".w" + p, std::move(w));
        store.add(std::string(prefix) + ".b" + p, std::move(b));
    }
}

Var dueling_head(Tape& tape, Var f, std::string_view prefix) {
    const Var v = dense(tape, f, join(prefix, "wv"), join(prefix, "bv"), Activation::Identity);
    const Var a = dense(tape, f, join(prefix, "wa"), join(prefix, "ba"), Activation::Identity);
    return tape.dueling(v, a);
}

Matrix dense(const Matrix& x, const Matrix& w, const Matrix& b, Activation act) {
    ParamStore p;
    p.add("w", w);
    p.add("b", b);
    Tape tape(p);
    return tape.value(dense(tape, tape.constant(x), "w", "b", act));
}

Matrix mhsa_mean(const Matrix& set, const ParamStore& params, std::string_view prefix, int heads) {
    Tape tape(params);
    return tape.value(mhsa_mean(tape, tape.constant(set), prefix, heads));
}

Matrix dueling_head(const Matrix& f, const ParamStore& params, std::string_view prefix) {
    Tape tape(params);
    return tape.value(dueling_head(tape, tape.constant(f), prefix));
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(const ParamStore& layout, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(layout.zeros_like()), v_(layout.zeros_like()) {}

void Adam::step(ParamStore& params, const GradStore& grads) {
    if (!params.same_layout(m_) || !grads.same_layout(m_)) throw ShapeError("optimizer layout mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const Matrix& g = grads.at(k);
        Matrix& m = m_.at(k);
        Matrix& v = v_.at(k);
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        params.at(k).array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }
}

// ---------------------------------------------------------------------------
// Weight files

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'W'};
constexpr std::uint32_t kWeightVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_f64(std::string& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

struct Reader {
    std::string_view bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw ShapeMismatch("weight file is truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + k])) << (8 * k);
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + k])) << (8 * k);
        pos += 8;
        return std::bit_cast<double>(v);
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(bytes.substr(pos, n));
        pos += n;
        return s;
    }
};

} // namespace

std::string serialize_params(const ParamStore& store) {
    std::string out(kMagic, 4);
    put_u32(out, kWeightVersion);
    put_u32(out, static_cast<std::uint32_t>(store.size()));
    for (std::size_t k = 0; k < store.size(); ++k) {
        const std::string& name = store.names()[k];
        const Matrix& m = store.at(k);
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(m.rows()));
        put_u32(out, static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
    }
    return out;
}

ParamStore deserialize_params(std::string_view bytes) {
    Reader r{bytes};
    if (r.str(4) != std::string(kMagic, 4)) throw ShapeMismatch("not a weight file");
    if (r.u32() != kWeightVersion) throw ShapeMismatch("unsupported weight file version");
    const std::uint32_t count = r.u32();
    ParamStore store;
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::string name = r.str(r.u32());
        const std::uint32_t rows = r.u32(), cols = r.u32();
        r.need(static_cast<std::size_t>(rows) * cols * 8);
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
        store.add(name, std::move(m));
    }
    if (r.pos != bytes.size()) throw ShapeMismatch("trailing bytes in weight file");
    return store;
}

void load_params_into(ParamStore& target, std::string_view bytes) {
    ParamStore loaded = deserialize_params(bytes);
    if (!loaded.same_layout(target)) {
        throw ShapeMismatch("weights do not fit this model: file has " + std::to_string(count_params(loaded)) +
                            " scalars in " + std::to_string(loaded.size()) + " entries, model expects " +
                            std::to_string(count_params(target)) + " in " + std::to_string(target.size()));
    }
    target = std::move(loaded);
}

void save_params_file(const ParamStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write weight file '" + path + "'");
    const std::string bytes = serialize_params(store);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace tsc
