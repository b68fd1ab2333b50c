// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "actrec/classifiers.hpp"
#include "actrec/errors.hpp"

namespace actrec {
namespace {

constexpr double kTau = 1e-12;  // floor for non-positive curvature

Standardizer fit_standardizer(const FeatureSet& set, bool enabled) {
  Standardizer s;
  s.mean.assign(set.dim, 0.0);
  s.scale.assign(set.dim, 1.0);
  if (!enabled || set.records.empty()) return s;
  const double n = static_cast<double>(set.records.size());
  for (const auto& r : set.records)
    for (std::size_t d = 0; d < set.dim; ++d) s.mean[d] += r.features[d];
  for (double& m : s.mean) m /= n;
  std::vector<double> var(set.dim, 0.0);
  for (const auto& r : set.records) {
    for (std::size_t d = 0; d < set.dim; ++d) {
      const double diff = r.features[d] - s.mean[d];
      var[d] += diff * diff;
    }
  }
  for (std::size_t d = 0; d < set.dim; ++d) {
    const double sd = std::sqrt(var[d] / n);
    s.scale[d] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

// Dual problem  min 0.5 a'Qa - e'a  s.t. 0 <= a <= C, y'a = 0, solved two
// multipliers at a time with maximal-violating-pair selection.
class SmoSolver {
 public:
  SmoSolver(const std::vector<std::vector<double>>& x, std::vector<int> y, int exponent,
            const SvmOptions& opts)
      : n_(x.size()), y_(std::move(y)), C_(opts.C), tol_(opts.tolerance),
        max_iter_(opts.max_iterations), kernel_(n_ * n_), alpha_(n_, 0.0), grad_(n_, -1.0) {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i; j < n_; ++j) {
        const double k = polynomial_kernel(x[i], x[j], exponent);
        kernel_[i * n_ + j] = k;
        kernel_[j * n_ + i] = k;
      }
    }
  }

  void solve() {
    while (iterations_ < max_iter_) {
      std::size_t i = 0, j = 0;
      if (!select_pair(i, j)) break;
      step(i, j);
      ++iterations_;
    }
    bias_ = -compute_rho();
  }

  const std::vector<double>& alpha() const { return alpha_; }
  double bias() const { return bias_; }
  long iterations() const { return iterations_; }

 private:
  double q(std::size_t i, std::size_t j) const {
    return y_[i] * y_[j] * kernel_[i * n_ + j];
  }
  bool in_up(std::size_t t) const {
    return (y_[t] > 0 && alpha_[t] < C_) || (y_[t] < 0 && alpha_[t] > 0.0);
  }
  bool in_low(std::size_t t) const {
    return (y_[t] > 0 && alpha_[t] > 0.0) || (y_[t] < 0 && alpha_[t] < C_);
  }

  bool select_pair(std::size_t& out_i, std::size_t& out_j) const {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t best_i = n_, best_j = n_;
    for (std::size_t t = 0; t < n_; ++t) {
      const double v = -y_[t] * grad_[t];
      if (in_up(t) && v > gmax) {
        gmax = v;
        best_i = t;
      }
      if (in_low(t) && v < gmin) {
        gmin = v;
        best_j = t;
      }
    }
    if (best_i == n_ || best_j == n_ || gmax - gmin < tol_) return false;
    out_i = best_i;
    out_j = best_j;
    return true;
  }

  void step(std::size_t i, std::size_t j) {
    const double old_i = alpha_[i];
    const double old_j = alpha_[j];
    double& ai = alpha_[i];
    double& aj = alpha_[j];
    if (y_[i] != y_[j]) {
      double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad_[i] - grad_[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > C_) {
          ai = C_;
          aj = C_ - diff;
        }
      } else if (aj > C_) {
        aj = C_;
        ai = C_ + diff;
      }
    } else {
      double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad_[i] - grad_[j]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > C_) {
        if (ai > C_) {
          ai = C_;
          aj = sum - C_;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > C_) {
        if (aj > C_) {
          aj = C_;
          ai = sum - C_;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    const double di = ai - old_i;
    const double dj = aj - old_j;
    for (std::size_t t = 0; t < n_; ++t) grad_[t] += q(t, i) * di + q(t, j) * dj;
  }

  double compute_rho() const {
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n_; ++t) {
      const double yg = y_[t] * grad_[t];
      if (alpha_[t] >= C_) {
        if (y_[t] < 0) ub = std::min(ub, yg);
        else lb = std::max(lb, yg);
      } else if (alpha_[t] <= 0.0) {
        if (y_[t] > 0) ub = std::min(ub, yg);
        else lb = std::max(lb, yg);
      } else {
        ++n_free;
        sum_free += yg;
      }
    }
    if (n_free > 0) return sum_free / static_cast<double>(n_free);
    return (ub + lb) / 2.0;
  }

  std::size_t n_;
  std::vector<int> y_;
  double C_;
  double tol_;
  long max_iter_;
  std::vector<double> kernel_;
  std::vector<double> alpha_;
  std::vector<double> grad_;
  double bias_ = 0.0;
  long iterations_ = 0;
};

}  // namespace

std::vector<double> Standardizer::apply(std::span<const float> x) const {
  if (x.size() != mean.size()) {
    throw ShapeError("feature vector has " + std::to_string(x.size()) +
                     " dimensions, model expects " + std::to_string(mean.size()));
  }
  std::vector<double> out(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) out[d] = (x[d] - mean[d]) / scale[d];
  return out;
}

double polynomial_kernel(std::span<const double> a, std::span<const double> b, int exponent) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  double r = 1.0;
  for (int e = 0; e < exponent; ++e) r *= dot;
  return r;
}

double PairMachine::decision(std::span<const double> x, int exponent) const {
  double f = bias;
  for (std::size_t s = 0; s < support.size(); ++s) {
    f += alpha[s] * y[s] * polynomial_kernel(support[s], x, exponent);
  }
  return f;
}

double PairMachine::dual_residual() const {
  double r = 0.0;
  for (std::size_t s = 0; s < alpha.size(); ++s) r += alpha[s] * y[s];
  return r;
}

SvmModel svm_train(const FeatureSet& train, const SvmOptions& opts) {
  train.validate();
  if (!(opts.C > 0.0)) throw ConfigError("SVM needs C > 0");
  if (opts.exponent < 1) throw ConfigError("SVM kernel exponent must be at least 1");
  std::vector<std::vector<std::size_t>> by_class(train.classes.size());
  for (std::size_t i = 0; i < train.records.size(); ++i) {
    by_class[train.records[i].label].push_back(i);
  }
  std::size_t populated = 0;
  for (const auto& c : by_class) populated += c.empty() ? 0 : 1;
  if (populated < 2) throw ConfigError("SVM training needs samples from at least two classes");

  SvmModel model;
  model.dim = train.dim;
  model.class_count = train.classes.size();
  model.exponent = opts.exponent;
  model.C = opts.C;
  model.standardizer = fit_standardizer(train, opts.standardize);
  std::vector<std::vector<double>> xs;
  xs.reserve(train.records.size());
  for (const auto& r : train.records) xs.push_back(model.standardizer.apply(r.features));

  for (std::size_t a = 0; a < by_class.size(); ++a) {
    for (std::size_t b = a + 1; b < by_class.size(); ++b) {
      if (by_class[a].empty() || by_class[b].empty()) continue;
      std::vector<std::vector<double>> px;
      std::vector<int> py;
      for (std::size_t i : by_class[a]) {
        px.push_back(xs[i]);
        py.push_back(+1);
      }
      for (std::size_t i : by_class[b]) {
        px.push_back(xs[i]);
        py.push_back(-1);
      }
      SmoSolver solver(px, py, opts.exponent, opts);
      solver.solve();
      PairMachine m;
      m.positive = a;
      m.negative = b;
      m.bias = solver.bias();
      m.iterations = solver.iterations();
      for (std::size_t t = 0; t < px.size(); ++t) {
        if (solver.alpha()[t] > 0.0) {
          m.support.push_back(px[t]);
          m.alpha.push_back(solver.alpha()[t]);
          m.y.push_back(py[t]);
        }
      }
      model.machines.push_back(std::move(m));
    }
  }
  return model;
}

std::size_t svm_predict(const SvmModel& model, std::span<const float> x) {
  const std::vector<double> z = model.standardizer.apply(x);
  std::vector<int> votes(model.class_count, 0);
  for (const PairMachine& m : model.machines) {
    ++votes[m.decision(z, model.exponent) > 0.0 ? m.positive : m.negative];
  }
  // max_element returns the first maximum, i.e. the lowest class index.
  return static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

}  // namespace actrec
