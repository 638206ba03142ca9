#include "gdp/diffusion.hpp"

#include <cmath>
#include <string>

namespace gdp::diffusion {

Solver parse_solver(std::string_view name) {
  if (name == "euler") return Solver::Euler;
  if (name == "rk4") return Solver::Rk4;
  throw std::invalid_argument("unknown solver: " + std::string(name));
}

std::string_view to_string(Solver s) { return s == Solver::Euler ? "euler" : "rk4"; }

void DiffusionConfig::validate() const {
  if (!(t0 < t1 && t1 < t2)) throw std::invalid_argument("diffusion times must satisfy t0 < t1 < t2");
  if (steps_per_unit < 1) throw std::invalid_argument("diffusion.steps_per_unit must be >= 1");
  if (heads < 1) throw std::invalid_argument("diffusion.heads must be >= 1");
  if (vector_blocks < 0) throw std::invalid_argument("diffusion.vector_blocks must be >= 0");
}

int DiffusionConfig::steps_for(double duration) const {
  return std::max(1, static_cast<int>(std::lround(steps_per_unit * duration)));
}

double logit_scale(const CrossFieldParams& p, bool dot_product_scaling) {
  return dot_product_scaling ? 1.0 / std::sqrt(static_cast<double>(p.head_width())) : 1.0;
}

namespace {

ag::Var project(const CrossFieldParams& p, const ag::Var& state) {
  if (state.value().rank() != 2 || state.dim(1) != p.width())
    throw std::invalid_argument("cross field: state " + ag::shape_str(state.shape()) + " does not match width " +
                                std::to_string(p.width()));
  if (p.heads < 1 || p.width() % p.heads != 0)
    throw std::invalid_argument("cross field: width " + std::to_string(p.width()) + " not divisible by " +
                                std::to_string(p.heads) + " heads");
  return ag::add_bias(ag::matmul(state, p.weight), p.bias);
}

void check_finite(const ag::Tensor& x, int step) {
  for (double v : x.values())
    if (!std::isfinite(v) || std::abs(v) > kDivergenceBound)
      throw DivergenceError("diffusion state diverged at integration step " + std::to_string(step) + " (value " +
                                std::to_string(v) + ")",
                            step);
}

}  // namespace

std::vector<std::vector<double>> attention_weights(const CrossFieldParams& params, int head, const ag::Tensor& state,
                                                   const graph::Neighborhoods& neighborhoods,
                                                   bool dot_product_scaling) {
  if (head < 0 || head >= params.heads) throw std::out_of_range("attention head " + std::to_string(head));
  ag::NoGradGuard no_grad;
  const ag::Var z = project(params, ag::constant(state));
  const ag::Csr adj = ag::Csr::from_lists(neighborhoods);
  std::vector<double> flat;
  ag::neighborhood_softmax(z.value(), adj, params.heads, head, logit_scale(params, dot_product_scaling), flat);
  std::vector<std::vector<double>> out(adj.rows());
  for (int i = 0; i < adj.rows(); ++i) out[i].assign(flat.begin() + adj.offsets[i], flat.begin() + adj.offsets[i + 1]);
  return out;
}

ag::Var cross_field(const CrossFieldParams& params, const ag::Var& state, const ag::Csr& adjacency,
                    bool dot_product_scaling) {
  const ag::Var z = project(params, state);
  return ag::graph_attention(z, adjacency, params.heads, logit_scale(params, dot_product_scaling));
}

ag::Var cross_field(const CrossFieldParams& params, const ag::Var& state, const graph::Neighborhoods& neighborhoods,
                    bool dot_product_scaling) {
  return cross_field(params, state, ag::Csr::from_lists(neighborhoods), dot_product_scaling);
}

ag::Var self_field(const SelfFieldParams& p, const ag::Var& state) {
  const ag::Var hidden = ag::tanh(ag::add_bias(ag::matmul(state, p.w1), p.b1));
  return ag::add_bias(ag::matmul(hidden, p.w2), p.b2);
}

ag::Var integrate(const Field& field, const ag::Var& x0, double t_start, double t_end, Solver solver, int steps) {
  if (!(t_end > t_start)) throw std::invalid_argument("integrate: t_end must exceed t_start");
  if (steps < 1) throw std::invalid_argument("integrate: steps must be >= 1");
  const double h = (t_end - t_start) / steps;
  ag::Var x = x0;
  for (int step = 1; step <= steps; ++step) {
    if (solver == Solver::Euler) {
      x = ag::add(x, ag::scale(field(x), h));
    } else {
      const ag::Var k1 = field(x);
      const ag::Var k2 = field(ag::add(x, ag::scale(k1, h / 2.0)));
      const ag::Var k3 = field(ag::add(x, ag::scale(k2, h / 2.0)));
      const ag::Var k4 = field(ag::add(x, ag::scale(k3, h)));
      const ag::Var incr = ag::add(ag::add(k1, ag::scale(k2, 2.0)), ag::add(ag::scale(k3, 2.0), k4));
      x = ag::add(x, ag::scale(incr, h / 6.0));
    }
    check_finite(x.value(), step);
  }
  return x;
}

ag::Var diffusion_block(const DiffusionBlockParams& params, const ag::Var& x0, const graph::DiffusionGraph& graph,
                        const DiffusionConfig& config) {
  if (x0.value().rank() != 2 || x0.dim(0) != graph.num_nodes)
    throw std::invalid_argument("diffusion block: state " + ag::shape_str(x0.shape()) + " does not match graph with " +
                                std::to_string(graph.num_nodes) + " nodes");
  const bool scaled = config.dot_product_scaling;
  ag::Var x = x0;

  std::vector<ag::Csr> phases;
  if (graph.phase_schedule.empty()) {
    phases.push_back(ag::Csr::from_lists(graph.neighborhoods));
  } else {
    for (const auto& phase : graph.phase_schedule) phases.push_back(ag::Csr::from_lists(phase));
  }
  const double span = (config.t1 - config.t0) / static_cast<double>(phases.size());
  for (std::size_t p = 0; p < phases.size(); ++p) {
    const ag::Csr& adj = phases[p];
    const double start = config.t0 + span * static_cast<double>(p);
    const double end = p + 1 == phases.size() ? config.t1 : start + span;
    x = integrate([&](const ag::Var& s) { return cross_field(params.cross, s, adj, scaled); }, x, start, end,
                  config.solver, config.steps_for(end - start));
  }
  return integrate([&](const ag::Var& s) { return self_field(params.self, s); }, x, config.t1, config.t2,
                   config.solver, config.steps_for(config.t2 - config.t1));
}

ag::Var cascaded_diffusion(const std::vector<DiffusionBlockParams>& blocks, const ag::Var& h,
                           const graph::DiffusionGraph& graph, const DiffusionConfig& config) {
  if (blocks.empty()) throw std::invalid_argument("cascaded diffusion needs at least one block");
  ag::Var x = h;
  for (const auto& block : blocks) x = diffusion_block(block, x, graph, config);
  return x;
}

namespace {
ag::Tensor gaussian(ag::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  ag::Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}
}  // namespace

DiffusionBlockParams make_block_params(int width, int heads, std::mt19937_64& rng) {
  if (width < 1 || heads < 1 || width % heads != 0)
    throw std::invalid_argument("diffusion block: width " + std::to_string(width) + " not divisible by " +
                                std::to_string(heads) + " heads");
  const double s = 1.0 / std::sqrt(static_cast<double>(width));
  DiffusionBlockParams p;
  p.cross.heads = heads;
  p.cross.weight = ag::parameter(gaussian({width, width}, 0.5 * s, rng));
  p.cross.bias = ag::parameter(ag::Tensor({width}, 0.0));
  p.self.w1 = ag::parameter(gaussian({width, width}, s, rng));
  p.self.b1 = ag::parameter(ag::Tensor({width}, 0.0));
  p.self.w2 = ag::parameter(gaussian({width, width}, 0.5 * s, rng));
  p.self.b2 = ag::parameter(ag::Tensor({width}, 0.0));
  return p;
}

DiffusionBlockParams zero_block_params(int width, int heads) {
  if (width < 1 || heads < 1 || width % heads != 0)
    throw std::invalid_argument("diffusion block: width not divisible by heads");
  DiffusionBlockParams p;
  p.cross.heads = heads;
  p.cross.weight = ag::parameter(ag::Tensor({width, width}, 0.0));
  p.cross.bias = ag::parameter(ag::Tensor({width}, 0.0));
  p.self.w1 = ag::parameter(ag::Tensor({width, width}, 0.0));
  p.self.b1 = ag::parameter(ag::Tensor({width}, 0.0));
  p.self.w2 = ag::parameter(ag::Tensor({width, width}, 0.0));
  p.self.b2 = ag::parameter(ag::Tensor({width}, 0.0));
  return p;
}

}  // namespace gdp::diffusion
