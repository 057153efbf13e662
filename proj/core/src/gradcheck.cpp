#include "segforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "segforge/error.hpp"
#include "segforge/ops.hpp"
#include "segforge/rng.hpp"

SEGFORGE_NAMESPACE_BEGIN

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard no_grad;
  const Tensor value = loss();
  if (value.numel() != 1) throw ContractError("gradient check: loss must be scalar, got " + value.shape().str());
  return static_cast<double>(value.item());
}

enum class Stencil { kCentral, kCentral4, kForward, kBackward };

// Finite-difference derivative along one direction; move(offset) places the
// inputs at x + offset * direction and move(0) restores them.
template <typename Move>
double derivative(const std::function<Tensor()>& loss, double h, Stencil stencil, Move&& move) {
  auto at = [&](double offset) {
    move(offset);
    return evaluate(loss);
  };
  double result = 0.0;
  switch (stencil) {
    case Stencil::kCentral:
      result = (at(h) - at(-h)) / (2.0 * h);
      break;
    case Stencil::kCentral4:
      result = (at(-2 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2 * h)) / (12.0 * h);
      break;
    // Second-order one-sided differences.
    case Stencil::kForward:
      result = (-3.0 * at(0.0) + 4.0 * at(h) - at(2 * h)) / (2.0 * h);
      break;
    case Stencil::kBackward:
      result = (3.0 * at(0.0) - 4.0 * at(-h) + at(-2 * h)) / (2.0 * h);
      break;
  }
  move(0.0);
  return result;
}

// Estimates a derivative and, when it misses and retries are enabled, tries
// one-sided stencils (a kink on one side leaves the other side smooth) and then
// a smaller and a larger step. Returns the estimate closest to analytic.
// Error measure for one coordinate. Central differences cannot resolve a
// derivative below a few ulps of the loss divided by the step; when analytic
// and numeric values are both under that resolution they agree (this is what
// structurally zero gradients, e.g. a bias feeding a batch norm, look like).
struct Comparison {
  double resolution = 0.0;

  Comparison(double loss, double h) : resolution(4.0 * std::numeric_limits<Real>::epsilon() * std::abs(loss) / (2.0 * h)) {}

  double error(double analytic, double numeric) const {
    if (std::max(std::abs(analytic), std::abs(numeric)) <= resolution) return 0.0;
    return relative_error(analytic, numeric);
  }
};

template <typename Estimate>
double probe(double analytic, double h, const Comparison& cmp, const GradCheckOptions& o, GradCheckReport& report,
             Estimate&& estimate) {
  double best = estimate(h, o.fourth_order ? Stencil::kCentral4 : Stencil::kCentral);
  if (!o.retry_steps || cmp.error(analytic, best) <= o.tolerance) return best;
  const std::pair<double, Stencil> ladder[] = {{h, Stencil::kForward},
                                               {h, Stencil::kBackward},
                                               {h * 0.125, Stencil::kCentral},
                                               {h * 8.0, Stencil::kCentral}};
  for (const auto& [step, stencil] : ladder) {
    const double again = estimate(step, stencil);
    if (cmp.error(analytic, again) < cmp.error(analytic, best)) best = again;
    if (cmp.error(analytic, best) <= o.tolerance) {
      ++report.coordinates_retried;
      break;
    }
  }
  return best;
}

void update(GradCheckReport& report, const std::string& name, std::size_t index, double analytic, double numeric,
            const Comparison& cmp, double tolerance) {
  const double err = cmp.error(analytic, numeric);
  ++report.coordinates_checked;
  if (err > report.max_relative_error || report.coordinates_checked == 1) {
    report.max_relative_error = err;
    report.worst_tensor = name;
    report.worst_index = index;
    report.analytic = analytic;
    report.numeric = numeric;
  }
  if (!(err <= tolerance)) report.passed = false;
}

}  // namespace

GradCheckReport check_gradients(const std::function<Tensor()>& loss, const std::vector<NamedTensor>& inputs,
                                const GradCheckOptions& options) {
  if (inputs.empty()) throw ContractError("gradient check needs at least one input");

  std::vector<bool> previous(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor t = inputs[i].tensor;
    previous[i] = t.requires_grad();
    t.set_requires_grad(true);
    t.clear_grad();
  }

  const double base = evaluate(loss);
  const double again = evaluate(loss);
  if (base != again) {
    throw OracleError("gradient check: loss is not deterministic (" + std::to_string(base) + " vs " +
                      std::to_string(again) + ")");
  }

  // Analytic pass.
  tape().clear();
  {
    const Tensor value = loss();
    if (value.rank() != 0) throw ContractError("gradient check: loss must be rank 0, got " + value.shape().str());
    backward(value);
  }
  std::vector<std::vector<double>> analytic(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& t = inputs[i].tensor;
    analytic[i].assign(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic[i].begin());
  }

  GradCheckReport report;
  Rng rng(options.seed);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor t = inputs[ti].tensor;
    auto values = t.data();
    const std::size_t n = values.size();

    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (options.max_coordinates != 0 && n > options.max_coordinates) {
      for (std::size_t i = 0; i < options.max_coordinates; ++i) {
        std::swap(coords[i], coords[i + rng.below(n - i)]);
      }
      coords.resize(options.max_coordinates);
      std::sort(coords.begin(), coords.end());
    }

    for (std::size_t i : coords) {
      const Real saved = values[i];
      double h = options.step * std::max(1.0, std::abs(static_cast<double>(saved)));
      if (options.adaptive_step) {
        const double roundoff = 4.0 * std::numeric_limits<Real>::epsilon() * std::abs(base);
        const double wanted = 10.0 * roundoff / (options.tolerance * std::max(std::abs(analytic[ti][i]), 1e-8));
        h = std::clamp(wanted, h, 100.0 * h);
      }
      const Comparison cmp(base, h);
      const double numeric = probe(analytic[ti][i], h, cmp, options, report, [&](double step, Stencil stencil) {
        // Divide by the step that is actually representable around x.
        const double h1 = static_cast<double>(static_cast<Real>(saved + step)) - static_cast<double>(saved);
        return derivative(loss, h1, stencil, [&](double offset) {
          values[i] = offset == 0.0 ? saved : static_cast<Real>(saved + offset);
        });
      });
      update(report, inputs[ti].name, i, analytic[ti][i], numeric, cmp, options.tolerance);
    }

    if (options.directional) {
      // Unit direction sign-aligned with the analytic gradient, so the expected
      // derivative is a sum of non-negative terms and cannot cancel.
      std::vector<double> direction(n);
      double norm = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double sign = analytic[ti][i] < 0.0 ? -1.0 : 1.0;
        direction[i] = sign * rng.uniform(0.5, 1.5);
        norm += direction[i] * direction[i];
      }
      norm = std::sqrt(norm);
      double expected = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        direction[i] /= norm;
        expected += direction[i] * analytic[ti][i];
      }
      const std::vector<Real> saved(values.begin(), values.end());
      const Comparison cmp(base, options.step);
      const double numeric = probe(expected, options.step, cmp, options, report, [&](double step, Stencil stencil) {
        return derivative(loss, step, stencil, [&](double offset) {
          for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<Real>(saved[i] + offset * direction[i]);
        });
      });
      std::copy(saved.begin(), saved.end(), values.begin());
      update(report, inputs[ti].name + " (directional)", std::numeric_limits<std::size_t>::max(), expected, numeric, cmp,
             options.tolerance);
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor t = inputs[i].tensor;
    t.set_requires_grad(previous[i]);
    t.clear_grad();
  }
  return report;
}

GradCheckReport numeric_grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                   const GradCheckOptions& options) {
  Tensor projection;
  auto loss = [&]() -> Tensor {
    Tensor y = f(x);
    if (y.rank() == 0) return y;
    if (!projection.defined()) {
      projection = Tensor(y.shape(), Real{1});
      if (options.random_projection) {
        Rng rng(derive_seed(options.seed, 0x70726f6aULL));
        for (Real& v : projection.data()) v = static_cast<Real>(rng.uniform(-1.0, 1.0));
      }
    }
    return sum(mul(y, projection));
  };
  return check_gradients(loss, {{"x", x}}, options);
}

SEGFORGE_NAMESPACE_END
