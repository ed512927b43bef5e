#pragma once

// Small fully connected networks: softplus hidden layers, linear output,
// per-input z-score normalization, MSE + Adam training, JSON weight files.
//
// Data matrices hold one sample per column.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "rde/error.hpp"
#include "rde/parallel.hpp"

namespace rde {

/// ln(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// d/dx softplus.
inline double logistic(double x) {
  const double e = std::exp(-std::abs(x));
  return x >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
}

struct NormStats {
  std::vector<double> mean;
  std::vector<double> scale;

  static NormStats identity(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)}; }

  /// Per-row mean and population standard deviation; constant rows get scale 1.
  static NormStats fit(const Eigen::Ref<const Eigen::MatrixXd>& x) {
    if (x.cols() == 0) throw ArgumentError("NormStats::fit: no samples");
    NormStats s;
    const double n = static_cast<double>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double m = x.row(r).sum() / n;
      const double var = (x.row(r).array() - m).square().sum() / n;
      const double sd = std::sqrt(var);
      s.mean.push_back(m);
      s.scale.push_back(sd > 1e-12 * std::max(1.0, std::abs(m)) ? sd : 1.0);
    }
    return s;
  }

  void validate(std::size_t width, const char* what) const {
    if (mean.size() != width || scale.size() != width) {
      throw ArgumentError(std::string(what) + ": normalization width does not match the network");
    }
    for (std::size_t k = 0; k < width; ++k) {
      if (!std::isfinite(mean[k]) || !(scale[k] > 0) || !std::isfinite(scale[k])) {
        throw ArgumentError(std::string(what) + ": normalization statistics must be finite with positive scale");
      }
    }
  }
};

/// Targets are learned as (transform(y) - mean) / scale.
enum class OutputTransform { identity, log };

struct OutputScaling {
  std::vector<double> mean;
  std::vector<double> scale;
  OutputTransform transform = OutputTransform::identity;
};

class Mlp {
 public:
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;  ///< layer l maps layer_sizes[l] -> layer_sizes[l+1]
  std::vector<Eigen::VectorXd> biases;
  NormStats norm;
  OutputScaling output;

  static Mlp zeros(std::vector<int> sizes) {
    if (sizes.size() < 2) throw ArgumentError("Mlp: need at least input and output widths");
    for (int s : sizes) {
      if (s < 1) throw ArgumentError("Mlp: layer widths must be positive");
    }
    Mlp net;
    net.layer_sizes = std::move(sizes);
    for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
      net.weights.push_back(Eigen::MatrixXd::Zero(net.layer_sizes[l + 1], net.layer_sizes[l]));
      net.biases.push_back(Eigen::VectorXd::Zero(net.layer_sizes[l + 1]));
    }
    net.norm = NormStats::identity(net.layer_sizes.front());
    net.output.mean.assign(net.layer_sizes.back(), 0.0);
    net.output.scale.assign(net.layer_sizes.back(), 1.0);
    return net;
  }

  /// Glorot-uniform weights, zero biases.
  static Mlp glorot(std::vector<int> sizes, std::uint64_t seed) {
    Mlp net = zeros(std::move(sizes));
    std::mt19937_64 rng(seed);
    for (auto& w : net.weights) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
      }
    }
    return net;
  }

  int inputs() const { return layer_sizes.front(); }
  int outputs() const { return layer_sizes.back(); }
  std::size_t layers() const { return weights.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  void validate() const {
    if (layer_sizes.size() < 2 || weights.size() + 1 != layer_sizes.size() || biases.size() != weights.size()) {
      throw ArgumentError("Mlp: layer count mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l] ||
          biases[l].size() != layer_sizes[l + 1]) {
        throw ArgumentError("Mlp: layer " + std::to_string(l) + " shape mismatch");
      }
      if (!weights[l].allFinite() || !biases[l].allFinite()) throw ArgumentError("Mlp: non-finite parameter");
    }
    norm.validate(static_cast<std::size_t>(inputs()), "Mlp input");
    NormStats out{output.mean, output.scale};
    out.validate(static_cast<std::size_t>(outputs()), "Mlp output");
  }

  Eigen::MatrixXd normalize(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    check_width(x.rows());
    Eigen::MatrixXd z(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) z.row(r) = (x.row(r).array() - norm.mean[r]) / norm.scale[r];
    return z;
  }

  /// Network-space output for normalized inputs.
  Eigen::MatrixXd raw(const Eigen::Ref<const Eigen::MatrixXd>& xn) const {
    Eigen::MatrixXd a = xn;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::MatrixXd z = weights[l] * a;
      z.colwise() += biases[l];
      if (l + 1 < weights.size()) z = z.unaryExpr([](double v) { return softplus(v); });
      a = std::move(z);
    }
    return a;
  }

  /// Maps network-space outputs to target units.
  Eigen::MatrixXd decode(Eigen::MatrixXd y) const {
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      y.row(r) = y.row(r).array() * output.scale[r] + output.mean[r];
      if (output.transform == OutputTransform::log) y.row(r) = y.row(r).array().exp();
    }
    return y;
  }

  /// Target units to network space.
  Eigen::MatrixXd encode(Eigen::MatrixXd y) const {
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      if (output.transform == OutputTransform::log) {
        if ((y.row(r).array() <= 0).any()) throw ArgumentError("Mlp: log output transform needs positive targets");
        y.row(r) = y.row(r).array().log();
      }
      y.row(r) = (y.row(r).array() - output.mean[r]) / output.scale[r];
    }
    return y;
  }

  Eigen::MatrixXd forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const { return decode(raw(normalize(x))); }

  Eigen::VectorXd forward(std::span<const double> x) const {
    check_width(static_cast<Eigen::Index>(x.size()));
    Eigen::VectorXd a(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) a[k] = (x[k] - norm.mean[k]) / norm.scale[k];
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::VectorXd z = weights[l] * a + biases[l];
      if (l + 1 < weights.size()) {
        for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = softplus(z[k]);
      }
      a = std::move(z);
    }
    for (Eigen::Index r = 0; r < a.size(); ++r) {
      a[r] = a[r] * output.scale[r] + output.mean[r];
      if (output.transform == OutputTransform::log) a[r] = std::exp(a[r]);
    }
    return a;
  }

  double forward1(std::span<const double> x) const { return forward(x)[0]; }

  /// Upper bound on the input-to-output Lipschitz constant of an
  /// identity-transform network (softplus is 1-Lipschitz).
  double lipschitz_bound() const {
    double L = 1.0 / *std::min_element(norm.scale.begin(), norm.scale.end());
    for (const auto& w : weights) L *= w.norm();
    return L * *std::max_element(output.scale.begin(), output.scale.end());
  }

 private:
  void check_width(Eigen::Index n) const {
    if (n != inputs()) {
      throw ArgumentError("Mlp: input width " + std::to_string(n) + " does not match " + std::to_string(inputs()));
    }
  }
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double loss = 0;  ///< MSE in network space

  static Gradients zeros_like(const Mlp& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.layers(); ++l) {
      g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
      g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
  }

  void add(const Gradients& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += o.weights[l];
      biases[l] += o.biases[l];
    }
    loss += o.loss;
  }

  void scale(double s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= s;
      biases[l] *= s;
    }
    loss *= s;
  }
};

namespace detail {

inline constexpr Eigen::Index kGradientChunk = 64;

/// Sum (not mean) of squared errors over the columns and its gradient.
inline Gradients backprop_sum(const Mlp& net, const Eigen::Ref<const Eigen::MatrixXd>& xn,
                              const Eigen::Ref<const Eigen::MatrixXd>& yn) {
  const std::size_t L = net.layers();
  std::vector<Eigen::MatrixXd> act(L + 1);
  std::vector<Eigen::MatrixXd> slope(L);
  act[0] = xn;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = net.weights[l] * act[l];
    z.colwise() += net.biases[l];
    if (l + 1 < L) {
      slope[l].resize(z.rows(), z.cols());
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        const double v = z.data()[k];
        const double e = std::exp(-std::abs(v));
        slope[l].data()[k] = v >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        z.data()[k] = std::max(v, 0.0) + std::log1p(e);
      }
    }
    act[l + 1] = std::move(z);
  }
  Gradients g;
  g.weights.resize(L);
  g.biases.resize(L);
  Eigen::MatrixXd delta = act[L] - yn;
  g.loss = delta.squaredNorm();
  delta *= 2.0;
  for (std::size_t l = L; l-- > 0;) {
    g.weights[l] = delta * act[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) delta = (net.weights[l].transpose() * delta).cwiseProduct(slope[l - 1]);
  }
  return g;
}

/// Mean gradient over fixed-size column chunks summed in chunk order, so the
/// result does not depend on the worker count.
inline Gradients mean_gradients(const Mlp& net, const Eigen::Ref<const Eigen::MatrixXd>& xn,
                                const Eigen::Ref<const Eigen::MatrixXd>& yn, unsigned threads) {
  const Eigen::Index n = xn.cols();
  const std::size_t chunks = static_cast<std::size_t>((n + kGradientChunk - 1) / kGradientChunk);
  std::vector<Gradients> parts(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const Eigen::Index start = static_cast<Eigen::Index>(c) * kGradientChunk;
    const Eigen::Index len = std::min(kGradientChunk, n - start);
    parts[c] = backprop_sum(net, xn.middleCols(start, len), yn.middleCols(start, len));
  });
  Gradients total = std::move(parts[0]);
  for (std::size_t c = 1; c < chunks; ++c) total.add(parts[c]);
  total.scale(1.0 / static_cast<double>(n * yn.rows()));
  return total;
}

inline Eigen::MatrixXd gather(const Eigen::MatrixXd& m, std::span<const std::size_t> cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(cols[k]));
  return out;
}

}  // namespace detail

/// Exact MSE gradients for a batch given in input and target units. The loss
/// is measured in network space (after output encoding).
inline Gradients mlp_gradients(const Mlp& net, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                               const Eigen::Ref<const Eigen::MatrixXd>& targets, unsigned threads = 1) {
  if (inputs.cols() == 0) throw ArgumentError("mlp_gradients: empty batch");
  if (inputs.cols() != targets.cols() || targets.rows() != net.outputs()) {
    throw ArgumentError("mlp_gradients: input/target shape mismatch");
  }
  Gradients g = detail::mean_gradients(net, net.normalize(inputs), net.encode(targets), threads);
  if (!std::isfinite(g.loss)) throw TrainingError("mlp_gradients: non-finite loss", 0);
  return g;
}

struct Dataset {
  Eigen::MatrixXd inputs;   ///< width x N
  Eigen::MatrixXd targets;  ///< outputs x N
  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;
  int epochs = 500;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double validation_fraction = 0.1;
  int patience = 25;     ///< epochs without validation improvement before stopping; 0 disables
  double lr_decay = 1;   ///< per-epoch multiplicative learning-rate factor
  bool fit_normalization = true;
  unsigned threads = 1;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (!(validation_fraction >= 0 && validation_fraction < 1)) {
      throw ConfigError("TrainConfig: validation_fraction must be in [0, 1)");
    }
    if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_eps > 0)) {
      throw ConfigError("TrainConfig: invalid Adam constants");
    }
    if (patience < 0) throw ConfigError("TrainConfig: patience must be >= 0");
    if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("TrainConfig: lr_decay must be in (0, 1]");
  }
};

struct TrainHistory {
  std::vector<double> train_mse;       ///< network space, averaged over the epoch's batches
  std::vector<double> validation_mse;  ///< network space; equals train_mse when there is no split
  int best_epoch = 0;
};

struct TrainResult {
  Mlp net;
  TrainHistory history;
};

/// Mean squared error in network space on already-encoded data.
inline double network_mse(const Mlp& net, const Eigen::Ref<const Eigen::MatrixXd>& xn,
                          const Eigen::Ref<const Eigen::MatrixXd>& yn) {
  return (net.raw(xn) - yn).squaredNorm() / static_cast<double>(yn.size());
}

/// Adam on MSE. Input normalization and output scaling (keeping the caller's
/// output transform) are fit on the training split when cfg.fit_normalization
/// is set. With early stopping the best-validation weights are returned.
inline TrainResult mlp_train(Mlp net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  if (cfg.epochs == 0) return {std::move(net), {}};
  const std::size_t n = data.size();
  if (n == 0) throw ArgumentError("mlp_train: empty dataset");
  if (data.inputs.rows() != net.inputs() || data.targets.rows() != net.outputs() ||
      static_cast<std::size_t>(data.targets.cols()) != n) {
    throw ArgumentError("mlp_train: dataset shape does not match the network");
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(n)));
  if (n_val >= n) n_val = n - 1;
  const std::span<const std::size_t> val_idx(perm.data(), n_val);
  const std::span<const std::size_t> train_idx(perm.data() + n_val, n - n_val);

  Eigen::MatrixXd x_train = detail::gather(data.inputs, train_idx);
  Eigen::MatrixXd y_train = detail::gather(data.targets, train_idx);
  if (cfg.fit_normalization) {
    net.norm = NormStats::fit(x_train);
    Mlp probe = net;
    probe.output.mean.assign(net.outputs(), 0.0);
    probe.output.scale.assign(net.outputs(), 1.0);
    const NormStats out = NormStats::fit(probe.encode(y_train));
    net.output.mean = out.mean;
    net.output.scale = out.scale;
  }
  x_train = net.normalize(x_train);
  y_train = net.encode(y_train);
  const Eigen::MatrixXd x_val = net.normalize(detail::gather(data.inputs, val_idx));
  const Eigen::MatrixXd y_val = net.encode(detail::gather(data.targets, val_idx));

  Gradients m = Gradients::zeros_like(net);
  Gradients v = Gradients::zeros_like(net);
  double b1t = 1, b2t = 1;
  auto adam = [&](double lr, std::vector<Eigen::MatrixXd>& p, std::vector<Eigen::MatrixXd>& mm,
                  std::vector<Eigen::MatrixXd>& vv, const std::vector<Eigen::MatrixXd>& g) {
    for (std::size_t l = 0; l < p.size(); ++l) {
      mm[l] = cfg.adam_beta1 * mm[l] + (1 - cfg.adam_beta1) * g[l];
      vv[l] = cfg.adam_beta2 * vv[l] + (1 - cfg.adam_beta2) * g[l].cwiseAbs2();
      p[l].array() -= lr * (mm[l].array() / (1 - b1t)) / ((vv[l].array() / (1 - b2t)).sqrt() + cfg.adam_eps);
    }
  };
  auto adam_vec = [&](double lr, std::vector<Eigen::VectorXd>& p, std::vector<Eigen::VectorXd>& mm,
                      std::vector<Eigen::VectorXd>& vv, const std::vector<Eigen::VectorXd>& g) {
    for (std::size_t l = 0; l < p.size(); ++l) {
      mm[l] = cfg.adam_beta1 * mm[l] + (1 - cfg.adam_beta1) * g[l];
      vv[l] = cfg.adam_beta2 * vv[l] + (1 - cfg.adam_beta2) * g[l].cwiseAbs2();
      p[l].array() -= lr * (mm[l].array() / (1 - b1t)) / ((vv[l].array() / (1 - b2t)).sqrt() + cfg.adam_eps);
    }
  };

  TrainResult result{net, {}};
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<std::size_t> order(train_idx.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  double lr = cfg.learning_rate;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const std::size_t> cols(order.data() + start, std::min(batch, order.size() - start));
      const Eigen::MatrixXd xb = detail::gather(x_train, cols);
      const Eigen::MatrixXd yb = detail::gather(y_train, cols);
      const Gradients g = detail::mean_gradients(net, xb, yb, cfg.threads);
      if (!std::isfinite(g.loss)) throw TrainingError("mlp_train: loss diverged", epoch);
      loss_sum += g.loss * static_cast<double>(cols.size());
      b1t *= cfg.adam_beta1;
      b2t *= cfg.adam_beta2;
      adam(lr, net.weights, m.weights, v.weights, g.weights);
      adam_vec(lr, net.biases, m.biases, v.biases, g.biases);
    }
    const double train_mse = loss_sum / static_cast<double>(order.size());
    const double val_mse = n_val > 0 ? network_mse(net, x_val, y_val) : train_mse;
    if (!std::isfinite(train_mse) || !std::isfinite(val_mse)) throw TrainingError("mlp_train: loss diverged", epoch);
    result.history.train_mse.push_back(train_mse);
    result.history.validation_mse.push_back(val_mse);
    if (val_mse < best) {
      best = val_mse;
      result.net = net;
      result.history.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
    lr *= cfg.lr_decay;
  }
  if (cfg.patience == 0) {
    result.net = net;
    result.history.best_epoch = static_cast<int>(result.history.train_mse.size());
  }
  return result;
}

// Weight files.

inline nlohmann::json mlp_save(const Mlp& net) {
  nlohmann::json j;
  j["layer_sizes"] = net.layer_sizes;
  j["hidden_activation"] = "softplus";
  j["output_activation"] = "linear";
  auto& ws = j["weights"] = nlohmann::json::array();
  auto& bs = j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < net.layers(); ++l) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) {
      std::vector<double> row(net.weights[l].cols());
      for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c) row[c] = net.weights[l](r, c);
      rows.push_back(row);
    }
    ws.push_back(std::move(rows));
    bs.push_back(std::vector<double>(net.biases[l].data(), net.biases[l].data() + net.biases[l].size()));
  }
  j["norm"] = {{"mean", net.norm.mean}, {"scale", net.norm.scale}};
  j["output"] = {{"mean", net.output.mean},
                 {"scale", net.output.scale},
                 {"transform", net.output.transform == OutputTransform::log ? "log" : "identity"}};
  return j;
}

namespace detail {
inline std::vector<double> number_array(const nlohmann::json& j, const std::string& field, std::size_t expect) {
  if (!j.is_array() || j.size() != expect) {
    throw ParseError("weight file: field '" + field + "' must be an array of " + std::to_string(expect) + " numbers");
  }
  std::vector<double> out;
  for (const auto& e : j) {
    if (!e.is_number()) throw ParseError("weight file: field '" + field + "' holds a non-number");
    out.push_back(e.get<double>());
  }
  return out;
}

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& field) {
  if (!j.is_object() || !j.contains(field)) throw ParseError("weight file: missing field '" + field + "'");
  return j.at(field);
}
}  // namespace detail

inline Mlp mlp_load(const nlohmann::json& j) {
  const auto& sizes_j = detail::require(j, "layer_sizes");
  std::vector<int> sizes;
  if (!sizes_j.is_array() || sizes_j.size() < 2) throw ParseError("weight file: field 'layer_sizes' is malformed");
  for (const auto& s : sizes_j) {
    if (!s.is_number_integer() || s.get<int>() < 1) throw ParseError("weight file: field 'layer_sizes' is malformed");
    sizes.push_back(s.get<int>());
  }
  Mlp net = Mlp::zeros(sizes);
  const auto& ws = detail::require(j, "weights");
  const auto& bs = detail::require(j, "biases");
  if (!ws.is_array() || ws.size() != net.layers()) throw ParseError("weight file: field 'weights' has wrong layer count");
  if (!bs.is_array() || bs.size() != net.layers()) throw ParseError("weight file: field 'biases' has wrong layer count");
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const std::string wname = "weights[" + std::to_string(l) + "]";
    if (!ws[l].is_array() || ws[l].size() != static_cast<std::size_t>(sizes[l + 1])) {
      throw ParseError("weight file: field '" + wname + "' has wrong row count");
    }
    for (int r = 0; r < sizes[l + 1]; ++r) {
      const auto row = detail::number_array(ws[l][r], wname + "[" + std::to_string(r) + "]", sizes[l]);
      for (int c = 0; c < sizes[l]; ++c) net.weights[l](r, c) = row[c];
    }
    const auto b = detail::number_array(bs[l], "biases[" + std::to_string(l) + "]", sizes[l + 1]);
    for (int r = 0; r < sizes[l + 1]; ++r) net.biases[l][r] = b[r];
  }
  const auto& norm = detail::require(j, "norm");
  net.norm.mean = detail::number_array(detail::require(norm, "mean"), "norm.mean", sizes.front());
  net.norm.scale = detail::number_array(detail::require(norm, "scale"), "norm.scale", sizes.front());
  if (j.contains("output")) {
    const auto& out = j.at("output");
    net.output.mean = detail::number_array(detail::require(out, "mean"), "output.mean", sizes.back());
    net.output.scale = detail::number_array(detail::require(out, "scale"), "output.scale", sizes.back());
    const auto& t = detail::require(out, "transform");
    if (t == "log") {
      net.output.transform = OutputTransform::log;
    } else if (t == "identity") {
      net.output.transform = OutputTransform::identity;
    } else {
      throw ParseError("weight file: field 'output.transform' must be 'identity' or 'log'");
    }
  }
  try {
    net.validate();
  } catch (const ArgumentError& e) {
    throw ParseError(std::string("weight file: ") + e.what());
  }
  return net;
}

inline void mlp_save_file(const Mlp& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << mlp_save(net).dump(1) << '\n';
  if (!out) throw Error("short write to '" + path + "'");
}

inline Mlp mlp_load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open weight file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("weight file '" + path + "': " + e.what());
  }
  return mlp_load(j);
}

}  // namespace rde
