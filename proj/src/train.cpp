#include "smt/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "smt/error.hpp"
#include "smt/ops.hpp"
#include "smt/random.hpp"

namespace smt {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(lr_peak > 0) || !(lr_warmup_start > 0)) throw ConfigError("learning rates must be positive");
  if (!(warmup_epochs >= 0) || warmup_epochs > static_cast<double>(epochs)) {
    throw ConfigError("warmup_epochs must lie in [0, epochs]");
  }
  if (!(cosine_final_ratio > 0) || cosine_final_ratio > 1) {
    throw ConfigError("cosine_final_ratio must lie in (0, 1]");
  }
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("eps must be positive");
}

void TrainConfig::write(KeyValues& kv) const {
  kv.set("batch_size", batch_size);
  kv.set("epochs", epochs);
  kv.set("lr_peak", lr_peak);
  kv.set("lr_warmup_start", lr_warmup_start);
  kv.set("warmup_epochs", warmup_epochs);
  kv.set("cosine_final_ratio", cosine_final_ratio);
  kv.set("early_stop_patience", early_stop_patience);
  kv.set("weight_decay", weight_decay);
  kv.set("beta1", beta1);
  kv.set("beta2", beta2);
  kv.set("adam_eps", eps);
  kv.set("seed", static_cast<long long>(seed));
}

TrainConfig TrainConfig::read(const KeyValues& kv) {
  TrainConfig c;
  auto size = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(std::string("config key '") + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.batch_size = size("batch_size", c.batch_size);
  c.epochs = size("epochs", c.epochs);
  c.lr_peak = kv.get_double("lr_peak", c.lr_peak);
  c.lr_warmup_start = kv.get_double("lr_warmup_start", c.lr_warmup_start);
  c.warmup_epochs = kv.get_double("warmup_epochs", c.warmup_epochs);
  c.cosine_final_ratio = kv.get_double("cosine_final_ratio", c.cosine_final_ratio);
  c.early_stop_patience = size("early_stop_patience", c.early_stop_patience);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.eps = kv.get_double("adam_eps", c.eps);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  return c;
}

double lr_schedule(double epoch, const TrainConfig& cfg) {
  const double total = static_cast<double>(cfg.epochs);
  epoch = std::clamp(epoch, 0.0, total);
  if (epoch < cfg.warmup_epochs) {
    return cfg.lr_warmup_start + (cfg.lr_peak - cfg.lr_warmup_start) * epoch / cfg.warmup_epochs;
  }
  const double span = total - cfg.warmup_epochs;
  const double final_lr = cfg.lr_peak * cfg.cosine_final_ratio;
  if (span <= 0) return cfg.lr_peak;
  const double progress = (epoch - cfg.warmup_epochs) / span;
  return final_lr + (cfg.lr_peak - final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState OptimizerState::zeros_like(const std::vector<Parameter>& params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.value.size(), Real{0});
    s.second_moment.emplace_back(p.value.size(), Real{0});
  }
  return s;
}

void adamw_step(std::vector<Parameter>& params, OptimizerState& state, double lr,
                const TrainConfig& cfg) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw DimensionError("optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& grad = params[i].value.grad;
    if (grad.empty()) continue;
    for (auto g : grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + params[i].name);
    }
    if (state.first_moment[i].size() != grad.size() || state.second_moment[i].size() != grad.size()) {
      throw DimensionError("optimizer moments for " + params[i].name + " have the wrong size");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].value.values;
    const auto& grad = params[i].value.grad;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const bool decay = params[i].decay && cfg.weight_decay != 0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const Real g = grad.empty() ? Real{0} : grad[k];
      if (decay) theta[k] -= lr * cfg.weight_decay * theta[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const Real m_hat = m[k] / bc1;
      const Real v_hat = v[k] / bc2;
      theta[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double evaluate_mse(SmtModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw ConfigError("evaluate_mse: empty example set");
  double total = 0;
  for (const auto& ex : examples) {
    const double d = model.predict(ex.input) - ex.target;
    total += d * d;
  }
  return total / static_cast<double>(examples.size());
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  // splitmix64 of (seed, epoch)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

TrainResult train(SmtModel& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training split is empty");
  if (val_set.empty()) throw ConfigError("validation split is empty");

  TrainResult result;
  OptimizerState opt = OptimizerState::zeros_like(model.parameters());
  std::size_t start_epoch = 0;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  if (options.resume) {
    const TrainState& r = *options.resume;
    SmtModel restored(model.config(), r.params);
    model = std::move(restored);
    opt = r.optimizer;
    start_epoch = r.next_epoch;
    result.best_val_loss = r.best_val_loss;
    result.best_epoch = r.best_epoch;
  }

  const std::size_t stop = std::min(cfg.epochs, options.stop_before_epoch.value_or(cfg.epochs));
  for (std::size_t epoch = start_epoch; epoch < stop; ++epoch) {
    const double lr = lr_schedule(static_cast<double>(epoch), cfg);
    const auto order = shuffled_order(train_set.size(), epoch_seed(cfg.seed, epoch));

    double loss_sum = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      Graph g;
      std::vector<Var> preds;
      Tensor targets({end - begin});
      for (std::size_t i = begin; i < end; ++i) {
        const Example& ex = train_set[order[i]];
        preds.push_back(model.forward(g, ex.input));
        targets.values[i - begin] = ex.target;
      }
      Var pred = concat(g, preds);
      Var loss = mse_loss(g, pred, g.constant(std::move(targets)));
      model.zero_grad();
      g.backward(loss);
      adamw_step(model.parameters(), opt, lr, cfg);
      loss_sum += g.value(loss).values[0] * static_cast<double>(end - begin);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.val_loss = evaluate_mse(model, val_set);
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      result.best_params = model.parameters();
      for (auto& p : result.best_params) p.value.clear_grad();
    }
    result.final_state.next_epoch = epoch + 1;
    if (epoch - result.best_epoch >= cfg.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  if (result.history.empty()) result.final_state.next_epoch = start_epoch;

  model.zero_grad();
  result.final_state.params = model.parameters();
  for (auto& p : result.final_state.params) p.value.clear_grad();
  for (auto& p : model.parameters()) p.value.clear_grad();
  result.final_state.optimizer = std::move(opt);
  result.final_state.best_val_loss = result.best_val_loss;
  result.final_state.best_epoch = result.best_epoch;
  return result;
}

}  // namespace smt
