#pragma once

// Long-double reference forward pass and finite-difference gradient check
// for Mlp, shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rde/neural.hpp"

namespace rde::testing {

// Forward pass written directly from the layer definitions, without Eigen products.
inline long double reference_output(const Mlp& net, const std::vector<double>& x) {
  std::vector<long double> a(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) a[k] = (x[k] - net.norm.mean[k]) / static_cast<long double>(net.norm.scale[k]);
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const auto& W = net.weights[l];
    std::vector<long double> z(W.rows());
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      long double s = net.biases[l][r];
      for (Eigen::Index c = 0; c < W.cols(); ++c) s += static_cast<long double>(W(r, c)) * a[c];
      z[r] = l + 1 < net.layers() ? std::max(s, 0.0L) + std::log1p(std::exp(-std::fabs(s))) : s;
    }
    a = std::move(z);
  }
  long double y = a[0] * net.output.scale[0] + net.output.mean[0];
  return net.output.transform == OutputTransform::log ? std::exp(y) : y;
}

// Mean squared error in network space (targets already encoded).
inline long double reference_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& yn) {
  Mlp raw = net;
  raw.output.mean.assign(raw.outputs(), 0.0);
  raw.output.scale.assign(raw.outputs(), 1.0);
  raw.output.transform = OutputTransform::identity;
  long double sum = 0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> col(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) col[r] = x(r, c);
    const long double d = reference_output(raw, col) - yn(0, c);
    sum += d * d;
  }
  return sum / static_cast<long double>(x.cols());
}

// Glorot weights plus random biases and input normalization.
inline Mlp random_net(std::vector<int> sizes, std::uint64_t seed) {
  Mlp net = Mlp::glorot(std::move(sizes), seed);
  std::mt19937_64 rng(seed ^ 0x5bd1e995);
  std::uniform_real_distribution<double> u(-0.5, 0.5), pos(0.5, 2.0);
  for (auto& b : net.biases) {
    for (Eigen::Index k = 0; k < b.size(); ++k) b[k] = u(rng);
  }
  for (int k = 0; k < net.inputs(); ++k) {
    net.norm.mean[k] = u(rng);
    net.norm.scale[k] = pos(rng);
  }
  return net;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  return m;
}

// Worst relative disagreement between analytic gradients and central
// differences of the long-double loss, over every parameter. The step is
// the one actually representable around each parameter.
inline double worst_gradient_error(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double h = 1e-5) {
  const Gradients g = mlp_gradients(net, x, y);
  const Eigen::MatrixXd yn = net.encode(y);
  double worst = 0;
  Mlp probe = net;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const Eigen::Index nw = probe.weights[l].size();
    for (Eigen::Index k = 0; k < nw + probe.biases[l].size(); ++k) {
      const bool is_w = k < nw;
      double& p = is_w ? probe.weights[l].data()[k] : probe.biases[l].data()[k - nw];
      const double analytic = is_w ? g.weights[l].data()[k] : g.biases[l].data()[k - nw];
      const double saved = p;
      p = saved + h;
      const long double step_up = static_cast<long double>(p) - saved;
      const long double up = reference_loss(probe, x, yn);
      p = saved - h;
      const long double step_down = saved - static_cast<long double>(p);
      const long double down = reference_loss(probe, x, yn);
      p = saved;
      const double fd = static_cast<double>((up - down) / (step_up + step_down));
      const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-8});
      worst = std::max(worst, std::abs(analytic - fd) / denom);
    }
  }
  return worst;
}

}  // namespace rde::testing
