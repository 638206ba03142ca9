#pragma once

// Graph neural diffusion: a cross-diffusion field (multi-head dot-product
// attention over a graph) integrated over [t0, t1], followed by a
// self-diffusion field (a per-node MLP, i.e. an edgeless graph) integrated
// over [t1, t2]. Both fields are autonomous and their parameters are shared
// across integration steps. Integration is discretize-then-differentiate, so
// gradients come straight from the tape.

#include <functional>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "gdp/autograd/ops.hpp"
#include "gdp/graph_topology.hpp"

namespace gdp::diffusion {

enum class Solver { Euler, Rk4 };

Solver parse_solver(std::string_view name);
std::string_view to_string(Solver s);

struct DiffusionConfig {
  double t0 = 0.0;
  double t1 = 1.0;
  double t2 = 2.0;
  Solver solver = Solver::Euler;
  int steps_per_unit = 5;
  int heads = 8;
  bool dot_product_scaling = false;
  int vector_blocks = 2;

  void validate() const;
  // Fixed step count for an interval of the given length (at least one).
  int steps_for(double duration) const;
};

// Packed heads: columns [k*C/K, (k+1)*C/K) of weight/bias belong to head k,
// so concatenating the K head outputs restores width C.
struct CrossFieldParams {
  ag::Var weight;  // [C, C]
  ag::Var bias;    // [C]
  int heads = 1;

  int width() const { return weight.dim(0); }
  int head_width() const { return width() / heads; }
};

// Two-layer MLP C -> C -> C with tanh between the layers.
struct SelfFieldParams {
  ag::Var w1, b1, w2, b2;
};

struct DiffusionBlockParams {
  CrossFieldParams cross;
  SelfFieldParams self;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

// State entries above this magnitude abort integration.
inline constexpr double kDivergenceBound = 1e6;

using Field = std::function<ag::Var(const ag::Var&)>;

double logit_scale(const CrossFieldParams& p, bool dot_product_scaling);

// Per-node softmax weights of one head, in neighbor-list order.
std::vector<std::vector<double>> attention_weights(const CrossFieldParams& params, int head, const ag::Tensor& state,
                                                   const graph::Neighborhoods& neighborhoods,
                                                   bool dot_product_scaling = false);

// f_cross(x): per head, the attention-weighted sum of the projected
// neighbor features, heads concatenated back to width C.
ag::Var cross_field(const CrossFieldParams& params, const ag::Var& state, const ag::Csr& adjacency,
                    bool dot_product_scaling = false);
ag::Var cross_field(const CrossFieldParams& params, const ag::Var& state, const graph::Neighborhoods& neighborhoods,
                    bool dot_product_scaling = false);

// f_self(x): MLP applied to every row independently.
ag::Var self_field(const SelfFieldParams& params, const ag::Var& state);

// Fixed-step explicit integration of dx/dt = field(x) from t_start to t_end.
ag::Var integrate(const Field& field, const ag::Var& x0, double t_start, double t_end, Solver solver, int steps);

// Cross field over [t0, t1] (phases of a self-cross schedule split the
// interval evenly), then the self field over [t1, t2].
ag::Var diffusion_block(const DiffusionBlockParams& params, const ag::Var& x0, const graph::DiffusionGraph& graph,
                        const DiffusionConfig& config);

ag::Var cascaded_diffusion(const std::vector<DiffusionBlockParams>& blocks, const ag::Var& h,
                           const graph::DiffusionGraph& graph, const DiffusionConfig& config);

// Trainable block with small random weights.
DiffusionBlockParams make_block_params(int width, int heads, std::mt19937_64& rng);
// Trainable block whose fields are identically zero.
DiffusionBlockParams zero_block_params(int width, int heads);

}  // namespace gdp::diffusion
