#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <random>
#include <vector>

#include "bisic/autograd.hpp"
#include "bisic/nn.hpp"
#include "bisic/ops.hpp"

namespace bisic::testing {

inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// |a - n| / max(|a|, |n|, 1e-3): relative for entries of meaningful size,
// absolute (scaled) for entries that are essentially zero.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / scale;
}

// Largest relative error between analytic and central-difference gradients of
// sum(f(inputs) * probe) with respect to every input.
inline double gradcheck(const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
                        std::vector<Tensor<double>> inputs, uint64_t seed = 7, double eps = 1e-6) {
  std::mt19937_64 rng(seed);
  Tensor<double> probe;
  auto scalar = [&](const std::vector<Tensor<double>>& xs, std::vector<Var<double>>* keep) {
    std::vector<Var<double>> vars;
    for (const auto& x : xs) vars.push_back(Var<double>::parameter(x));
    Var<double> out = f(vars);
    if (probe.empty()) probe = random_tensor(out.shape(), rng);
    double s = 0;
    for (int64_t i = 0; i < out.numel(); ++i) s += out.value()[i] * probe[i];
    if (keep) {
      *keep = vars;
      Var<double> p = Var<double>::constant(probe);
      Var<double> prod = make_op<double>(Tensor<double>::scalar(s), {out}, [p](Node<double>& n) {
        Tensor<double> g = p.value();
        for (auto& v : g.values()) v *= n.grad[0];
        n.inputs[0]->accumulate(std::move(g));
      });
      prod.backward();
    }
    return s;
  };
  std::vector<Var<double>> vars;
  scalar(inputs, &vars);
  double worst = 0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> analytic =
        vars[k].grad().empty() ? Tensor<double>(inputs[k].shape()) : vars[k].grad();
    for (int64_t i = 0; i < inputs[k].numel(); ++i) {
      auto plus = inputs;
      auto minus = inputs;
      plus[k][i] += eps;
      minus[k][i] -= eps;
      const double numeric = (scalar(plus, nullptr) - scalar(minus, nullptr)) / (2 * eps);
      worst = std::max(worst, relative_error(analytic[i], numeric));
    }
  }
  return worst;
}

// Same check with respect to module parameters, perturbed in place. At most
// `per_param` entries of each parameter are probed (spread evenly).
inline double gradcheck_params(const nn::NamedParams<double>& params, const std::function<Var<double>()>& f,
                               uint64_t seed = 11, int64_t per_param = 12, double eps = 1e-6,
                               std::string* worst_name = nullptr) {
  std::mt19937_64 rng(seed);
  Var<double> out = f();
  const Var<double> probe = Var<double>::constant(random_tensor(out.shape(), rng));
  auto loss = [&]() { return ops::sum(ops::mul(f(), probe)).value().item(); };
  for (const auto& [name, p] : params) Var<double>(p).zero_grad();
  ops::sum(ops::mul(out, probe)).backward();
  double worst = 0;
  for (const auto& [name, p] : params) {
    Var<double> v = p;
    const Tensor<double> analytic = v.grad().empty() ? Tensor<double>(v.shape()) : v.grad();
    const int64_t n = v.numel();
    const int64_t step = std::max<int64_t>(1, n / std::max<int64_t>(1, per_param));
    for (int64_t i = 0; i < n; i += step) {
      double& x = v.mutable_value()[i];
      const double orig = x;
      x = orig + eps;
      const double up = loss();
      x = orig - eps;
      const double dn = loss();
      x = orig;
      const double err = relative_error(analytic[i], (up - dn) / (2 * eps));
      if (err > worst) {
        worst = err;
        if (worst_name) *worst_name = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return worst;
}

}  // namespace bisic::testing
