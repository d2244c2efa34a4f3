#include "mbmf/direct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace mbmf::direct_opt {

namespace {

// Stand-in for +inf so that arithmetic in the hull test stays finite.
constexpr double kBadValue = 1e150;
constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

void SearchBox::validate() const {
  if (lower.size() == 0 || lower.size() != upper.size())
    throw std::invalid_argument("search box dimension mismatch");
  for (Eigen::Index d = 0; d < lower.size(); ++d)
    if (!(lower[d] < upper[d]))
      throw std::invalid_argument("search box requires lower < upper in every dimension");
  if (!lower.allFinite() || !upper.allFinite())
    throw std::invalid_argument("search box bounds must be finite");
}

double rect_diameter(const Eigen::VectorXi& levels) {
  double sq = 0.0;
  for (Eigen::Index d = 0; d < levels.size(); ++d) {
    double side = std::pow(3.0, -static_cast<double>(levels[d]));
    sq += side * side;
  }
  return 0.5 * std::sqrt(sq);
}

std::vector<std::size_t> potentially_optimal(
    const std::vector<DirectRect>& rects, double f_min, double epsilon) {
  if (rects.empty()) throw std::invalid_argument("potentially_optimal on empty set");

  // One representative per diameter class: minimum value, oldest on ties.
  std::map<double, std::size_t> class_min;
  for (std::size_t i = 0; i < rects.size(); ++i) {
    auto [it, inserted] = class_min.try_emplace(rects[i].diameter, i);
    if (!inserted) {
      const DirectRect& cur = rects[it->second];
      const DirectRect& cand = rects[i];
      if (cand.f_center < cur.f_center ||
          (cand.f_center == cur.f_center &&
           cand.creation_index < cur.creation_index))
        it->second = i;
    }
  }
  std::vector<std::pair<double, std::size_t>> classes(class_min.begin(),
                                                      class_min.end());

  std::vector<std::size_t> result;
  const double tol = 1e-12;
  for (std::size_t j = 0; j < classes.size(); ++j) {
    const double dj = classes[j].first;
    const double fj = rects[classes[j].second].f_center;
    double k_lo = 0.0;
    double k_hi = kInf;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (i == j) continue;
      const double di = classes[i].first;
      const double fi = rects[classes[i].second].f_center;
      if (di < dj)
        k_lo = std::max(k_lo, (fj - fi) / (dj - di));
      else
        k_hi = std::min(k_hi, (fi - fj) / (di - dj));
    }
    if (k_lo > k_hi + tol) continue;
    if (std::isfinite(k_hi) &&
        fj - k_hi * dj > f_min - epsilon * std::abs(f_min) + tol)
      continue;
    result.push_back(classes[j].second);
  }
  return result;
}

DirectResult direct_minimize(const std::function<double(const Vec&)>& objective,
                             const SearchBox& box, int budget, double epsilon) {
  DirectOptions options;
  options.budget = budget;
  options.epsilon = epsilon;
  return direct_minimize(objective, box, options);
}

DirectResult direct_minimize(const std::function<double(const Vec&)>& objective,
                             const SearchBox& box,
                             const DirectOptions& options) {
  box.validate();
  if (options.budget < 1) throw std::invalid_argument("DIRECT budget must be >= 1");
  const Eigen::Index d = box.dim();
  const Vec span = box.upper - box.lower;

  auto denorm = [&](const Vec& c) -> Vec {
    return box.lower.array() + c.array() * span.array();
  };

  int evals = 0;
  bool saw_finite = false;
  Vec best_center;
  double best_value = kInf;

  // Evaluates the objective at a normalized center, charging the budget.
  // Returns the sentinel for non-finite values.
  auto evaluate = [&](const Vec& c) -> double {
    double v = objective(denorm(c));
    ++evals;
    if (!std::isfinite(v)) {
      v = kBadValue;
    } else {
      saw_finite = true;
    }
    if (v < best_value) {
      best_value = v;
      best_center = c;
    }
    return v;
  };

  std::vector<DirectRect> rects;
  std::uint64_t next_index = 0;
  {
    DirectRect root;
    root.center = Vec::Constant(d, 0.5);
    root.levels = Eigen::VectorXi::Zero(d);
    root.diameter = rect_diameter(root.levels);
    root.f_center = evaluate(root.center);
    root.creation_index = next_index++;
    rects.push_back(std::move(root));
  }

  while (evals + 2 <= options.budget) {
    std::vector<std::size_t> selected =
        potentially_optimal(rects, best_value, options.epsilon);
    bool out_of_budget = false;
    for (std::size_t idx : selected) {
      if (evals + 2 > options.budget) {
        out_of_budget = true;
        break;
      }
      DirectRect& parent = rects[idx];
      // Lowest-index longest side (= smallest trisection level).
      Eigen::Index split_dim = 0;
      for (Eigen::Index dim = 1; dim < d; ++dim)
        if (parent.levels[dim] < parent.levels[split_dim]) split_dim = dim;

      const double offset =
          std::pow(3.0, -static_cast<double>(parent.levels[split_dim] + 1));
      Eigen::VectorXi child_levels = parent.levels;
      child_levels[split_dim] += 1;
      const double child_diameter = rect_diameter(child_levels);

      Vec left_center = parent.center;
      left_center[split_dim] -= offset;
      Vec right_center = parent.center;
      right_center[split_dim] += offset;

      DirectRect left;
      left.center = std::move(left_center);
      left.levels = child_levels;
      left.diameter = child_diameter;
      left.f_center = evaluate(left.center);
      left.creation_index = next_index++;

      DirectRect right;
      right.center = std::move(right_center);
      right.levels = child_levels;
      right.diameter = child_diameter;
      right.f_center = evaluate(right.center);
      right.creation_index = next_index++;

      parent.levels = std::move(child_levels);
      parent.diameter = child_diameter;

      rects.push_back(std::move(left));
      rects.push_back(std::move(right));
    }
    if (!out_of_budget && options.observer) options.observer(rects);
    if (out_of_budget) break;
  }

  if (!saw_finite)
    throw NumericalError("DIRECT: objective returned no finite value within budget");

  DirectResult result;
  result.best_point = denorm(best_center);
  result.best_value = best_value;
  result.eval_count = evals;
  return result;
}

}  // namespace mbmf::direct_opt
