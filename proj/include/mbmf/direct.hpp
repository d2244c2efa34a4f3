#pragma once

#include <functional>
#include <vector>

#include "mbmf/common.hpp"

namespace mbmf::direct_opt {

struct SearchBox {
  Vec lower;
  Vec upper;

  Eigen::Index dim() const { return lower.size(); }
  void validate() const;
};

// One cell of the DIRECT partition, in normalized [0,1]^d coordinates.
// levels[d] counts trisections along dimension d, so the side length is
// 3^-levels[d] and the diameter is half the cell's space diagonal.
struct DirectRect {
  Vec center;
  double f_center = 0.0;
  Eigen::VectorXi levels;
  double diameter = 0.0;
  std::uint64_t creation_index = 0;
};

double rect_diameter(const Eigen::VectorXi& levels);

// Indices of the potentially-optimal rectangles: lower-right convex hull in
// the (diameter, f_center) plane, with Jones' epsilon improvement condition
// f_center - K*diameter <= f_min - epsilon*|f_min| for some K >= 0. One
// representative per diameter class (minimum value, oldest on ties),
// returned sorted by ascending diameter.
std::vector<std::size_t> potentially_optimal(
    const std::vector<DirectRect>& rects, double f_min, double epsilon);

struct DirectResult {
  Vec best_point;
  double best_value = 0.0;
  int eval_count = 0;
};

struct DirectOptions {
  int budget = 0;
  double epsilon = 1e-4;
  // Called after every completed divide iteration with the full partition;
  // used by tests to check the tiling invariant. Not called on the final
  // partial iteration if the budget runs out mid-split.
  std::function<void(const std::vector<DirectRect>&)> observer;
};

// Deterministic DIRECT minimization over the box. Non-finite objective
// values are treated as +inf (a large sentinel); if no evaluated point is
// finite the search fails with NumericalError. Terminates on budget only.
DirectResult direct_minimize(const std::function<double(const Vec&)>& objective,
                             const SearchBox& box, int budget,
                             double epsilon = 1e-4);
DirectResult direct_minimize(const std::function<double(const Vec&)>& objective,
                             const SearchBox& box, const DirectOptions& options);

}  // namespace mbmf::direct_opt
