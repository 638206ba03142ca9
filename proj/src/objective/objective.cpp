#include "gdp/objective.hpp"

#include <stdexcept>
#include <string>

namespace gdp::objective {

using ag::Tensor;
using ag::Var;
using nlohmann::json;

Norm parse_norm(std::string_view name) {
  if (name == "l1") return Norm::L1;
  if (name == "l2") return Norm::L2;
  throw std::invalid_argument("unknown loss norm: " + std::string(name));
}

std::string_view to_string(Norm n) { return n == Norm::L1 ? "l1" : "l2"; }

json LossConfig::to_json() const {
  return json{{"norm", std::string(to_string(norm))},
              {"init_alpha", init_alpha},
              {"init_beta", init_beta},
              {"init_gamma", init_gamma},
              {"init_lambda", init_lambda}};
}

LossConfig LossConfig::from_json(const json& j) {
  LossConfig c;
  if (j.contains("norm")) c.norm = parse_norm(j.at("norm").get<std::string>());
  c.init_alpha = j.value("init_alpha", c.init_alpha);
  c.init_beta = j.value("init_beta", c.init_beta);
  c.init_gamma = j.value("init_gamma", c.init_gamma);
  c.init_lambda = j.value("init_lambda", c.init_lambda);
  return c;
}

BalanceParams make_balance(const LossConfig& c) {
  return {ag::parameter(Tensor({1}, c.init_alpha)), ag::parameter(Tensor({1}, c.init_beta)),
          ag::parameter(Tensor({1}, c.init_gamma)), ag::parameter(Tensor({1}, c.init_lambda))};
}

BalanceParams add_balance(model::ParamStore& store, const LossConfig& c) {
  store.add("balance.alpha", Tensor({1}, c.init_alpha));
  store.add("balance.beta", Tensor({1}, c.init_beta));
  store.add("balance.gamma", Tensor({1}, c.init_gamma));
  store.add("balance.lambda", Tensor({1}, c.init_lambda));
  return balance_from(store);
}

BalanceParams balance_from(const model::ParamStore& store) {
  return {store.get("balance.alpha"), store.get("balance.beta"), store.get("balance.gamma"),
          store.get("balance.lambda")};
}

Var weighted_pose_loss(const Var& pred, const Tensor& target, const Var& a, const Var& b, Norm norm) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("prediction " + ag::shape_str(pred.shape()) + " and target " +
                                ag::shape_str(target.shape()) + " differ in shape");
  const int cols = pred.dim(1);
  const int rows = pred.dim(0);
  const int p = norm == Norm::L1 ? 1 : 2;
  const Var res = ag::sub(pred, ag::constant(target));
  const Var dt = ag::sum(ag::row_norms(ag::slice_cols(res, 0, 3), p));
  const Var dr = ag::sum(ag::row_norms(ag::slice_cols(res, 3, cols), p));
  const Var t = ag::add(ag::scale_by(dt, ag::exp(ag::scale(a, -1.0))), ag::scale(a, rows));
  const Var r = ag::add(ag::scale_by(dr, ag::exp(ag::scale(b, -1.0))), ag::scale(b, rows));
  return ag::add(t, r);
}

Var absolute_pose_loss(const Var& pred, const Tensor& target, const BalanceParams& bp, Norm norm) {
  return weighted_pose_loss(pred, target, bp.alpha, bp.beta, norm);
}

Var relative_pose_loss(const Var& pred_rel, const Tensor& target_rel, const BalanceParams& bp, Norm norm) {
  return weighted_pose_loss(pred_rel, target_rel, bp.gamma, bp.lambda, norm);
}

Tensor relative_targets(const Tensor& targets, const std::vector<std::pair<int, int>>& pairs) {
  const int cols = targets.dim(1);
  Tensor out({static_cast<int>(pairs.size()), cols});
  for (std::size_t e = 0; e < pairs.size(); ++e)
    for (int c = 0; c < cols; ++c) out.at(e, c) = targets.at(pairs[e].second, c) - targets.at(pairs[e].first, c);
  return out;
}

LossBreakdown total_loss(const model::MultiLevelOutput& decoded, const Tensor& targets, const BalanceParams& bp,
                         const LossConfig& config, const std::vector<int>& expected_layers) {
  std::vector<int> got;
  for (const auto& l : decoded.layers) got.push_back(l.layer);
  if (got != expected_layers) {
    std::string msg = "decoded layers {";
    for (int l : got) msg += " " + model::layer_name(l);
    msg += " } do not match the configured layers {";
    for (int l : expected_layers) msg += " " + model::layer_name(l);
    throw model::ConfigError(msg + " }");
  }
  LossBreakdown out;
  for (const auto& l : decoded.layers) {
    out.layers.push_back(l.layer);
    const Var a = absolute_pose_loss(l.absolute, targets, bp, config.norm);
    out.absolute.push_back(a);
    out.total = out.total.defined() ? ag::add(out.total, a) : a;
    if (l.pairs.empty()) {
      out.relative.emplace_back();
      continue;
    }
    const Var r = relative_pose_loss(l.relative, relative_targets(targets, l.pairs), bp, config.norm);
    out.relative.push_back(r);
    out.total = ag::add(out.total, r);
  }
  return out;
}

}  // namespace gdp::objective
