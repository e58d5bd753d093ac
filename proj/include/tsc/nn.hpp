#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tsc/random.hpp"

namespace tsc {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Ordered collection of named matrices. Row vectors (1 x n) hold biases.
class ParamStore {
public:
    /// Throws ShapeError if the name is taken.
    void add(const std::string& name, Matrix value);
    bool contains(std::string_view name) const;
    std::size_t index_of(std::string_view name) const; // throws ShapeError
    Matrix& at(std::string_view name) { return values_[index_of(name)]; }
    const Matrix& at(std::string_view name) const { return values_[index_of(name)]; }
    Matrix& at(std::size_t index) { return values_.at(index); }
    const Matrix& at(std::size_t index) const { return values_.at(index); }

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }

    /// Same names and shapes, all zeros.
    ParamStore zeros_like() const;
    bool same_layout(const ParamStore& other) const;
    void set_zero();

    bool operator==(const ParamStore& other) const;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
};

/// Accumulated gradients, shape-congruent with the store they came from.
using GradStore = ParamStore;

std::size_t count_params(const ParamStore& store);
/// Scalars held by the listed entries only.
std::size_t count_params(const ParamStore& store, const std::vector<std::string>& names);

/// Fills `m` uniformly in [-sqrt(1/fan_in), sqrt(1/fan_in)].
void init_uniform(Matrix& m, std::size_t fan_in, Rng& rng);

enum class Activation : std::uint8_t { Identity, Sigmoid, Relu };

/// Handle to a node on a Tape.
struct Var {
    std::size_t id = 0;
};

/// Records a forward computation so that gradients with respect to the
/// parameters of one store can be accumulated afterwards.
class Tape {
public:
    explicit Tape(const ParamStore& params);

    Var param(std::string_view name);
    Var constant(Matrix value);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);     // same shape
    Var add_row(Var a, Var b); // b (1 x n) added to every row of a
    Var activate(Var a, Activation act);
    Var softmax_rows(Var a);
    Var transpose(Var a);
    Var scale(Var a, double s);
    Var mean_rows(Var a); // 1 x n column means
    Var sum_rows(Var a);  // 1 x n column sums
    Var concat_cols(const std::vector<Var>& parts);
    Var concat_rows(const std::vector<Var>& parts);
    Var slice_cols(Var a, std::size_t start, std::size_t count);
    Var row(Var a, std::size_t r);
    /// Dueling combination: v is k x 1, a is k x n; q = v + a - rowmean(a).
    Var dueling(Var v, Var a);

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    const ParamStore& params() const { return *params_; }

    /// Back-propagates `seed` (shape of `out`) and adds parameter gradients
    /// into `grads`, which must share the store's layout.
    void backward(Var out, const Matrix& seed, GradStore& grads);

private:
    enum class Op : std::uint8_t {
        Param, Constant, MatMul, Add, AddRow, Sigmoid, Relu, Softmax, Transpose, Scale,
        MeanRows, SumRows, ConcatCols, ConcatRows, SliceCols, Row, Dueling
    };
    struct Node {
        Op op;
        Matrix value;
        std::vector<std::size_t> inputs;
        std::size_t aux = 0; // parameter index, slice start or row
        double scalar = 0.0;
    };
    Var push(Node node);
    const Matrix& val(Var v) const { return nodes_[v.id].value; }

    const ParamStore* params_;
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Layers. Names refer to entries of the tape's store.

/// act(x W + b).
Var dense(Tape& tape, Var x, std::string_view w, std::string_view b, Activation act);

/// Multi-head scaled dot-product attention of `queries` over `keys_values`
/// with learned projections <prefix>.{wq,bq,wk,bk,wv,bv,wo,bo}; rows are set
/// elements, no positional encoding.
Var attention(Tape& tape, Var queries, Var keys_values, std::string_view prefix, int heads);
/// Self-attention over a set followed by the mean over its elements.
Var mhsa_mean(Tape& tape, Var set, std::string_view prefix, int heads);
/// Adds attention projections for model width `dim` to `store`.
void add_attention_params(ParamStore& store, std::string_view prefix, int dim, Rng& rng);

/// q = V(f) + A(f) - mean A(f) with heads <prefix>.{wv,bv,wa,ba}.
Var dueling_head(Tape& tape, Var f, std::string_view prefix);

// Value-level helpers on plain matrices.
Matrix dense(const Matrix& x, const Matrix& w, const Matrix& b, Activation act);
Matrix mhsa_mean(const Matrix& set, const ParamStore& params, std::string_view prefix, int heads);
Matrix dueling_head(const Matrix& f, const ParamStore& params, std::string_view prefix);

// ---------------------------------------------------------------------------

/// Adaptive-moment optimizer.
class Adam {
public:
    explicit Adam(const ParamStore& layout, double lr = 0.001, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    /// One update of `params` against `grads`. Throws ShapeError on layout
    /// mismatch.
    void step(ParamStore& params, const GradStore& grads);
    long long steps() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    ParamStore m_, v_;
};

// ---------------------------------------------------------------------------
// Weight files: "TSCW", u32 version, u32 count, then per entry
// u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64 (row major),
// all little-endian.

std::string serialize_params(const ParamStore& store);
ParamStore deserialize_params(std::string_view bytes);
/// Overwrites `target` from `bytes`; throws ShapeMismatch unless names and
/// shapes agree exactly.
void load_params_into(ParamStore& target, std::string_view bytes);

void save_params_file(const ParamStore& store, const std::string& path);
std::string read_file_bytes(const std::string& path);

} // namespace tsc
