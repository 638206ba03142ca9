#pragma once

// Balanced pose loss with learnable weights, summed over decoding layers and
// over absolute and chain-relative predictions.

#include <string_view>
#include <vector>

#include <json.hpp>

#include "gdp/autograd/ops.hpp"
#include "gdp/model/model.hpp"

namespace gdp::objective {

enum class Norm { L1, L2 };

Norm parse_norm(std::string_view name);
std::string_view to_string(Norm n);

struct LossConfig {
  Norm norm = Norm::L1;
  double init_alpha = 0.0;
  double init_beta = -3.0;
  double init_gamma = 0.0;
  double init_lambda = -3.0;

  nlohmann::json to_json() const;
  static LossConfig from_json(const nlohmann::json& j);
};

// Each weight is a one-element tensor.
struct BalanceParams {
  ag::Var alpha, beta, gamma, lambda;
};

BalanceParams make_balance(const LossConfig& config);
// Registers the four weights under "balance.*" and returns views onto them.
BalanceParams add_balance(model::ParamStore& store, const LossConfig& config);
BalanceParams balance_from(const model::ParamStore& store);

// Sum over rows of |dt| e^-a + a + |dr| e^-b + b, where dt is the first three
// columns of pred - target and dr the rest.
ag::Var weighted_pose_loss(const ag::Var& pred, const ag::Tensor& target, const ag::Var& a, const ag::Var& b, Norm norm);

ag::Var absolute_pose_loss(const ag::Var& pred, const ag::Tensor& target, const BalanceParams& bp, Norm norm = Norm::L1);
ag::Var relative_pose_loss(const ag::Var& pred_rel, const ag::Tensor& target_rel, const BalanceParams& bp,
                           Norm norm = Norm::L1);

// Target rows for (i, i') pairs: target[i'] - target[i].
ag::Tensor relative_targets(const ag::Tensor& targets, const std::vector<std::pair<int, int>>& pairs);

struct LossBreakdown {
  std::vector<int> layers;
  std::vector<ag::Var> absolute;  // per layer
  std::vector<ag::Var> relative;  // per layer; undefined without chain pairs
  ag::Var total;
};

// Throws model::ConfigError when the decoded layers differ from expected_layers.
LossBreakdown total_loss(const model::MultiLevelOutput& decoded, const ag::Tensor& targets, const BalanceParams& bp,
                         const LossConfig& config, const std::vector<int>& expected_layers);

}  // namespace gdp::objective
