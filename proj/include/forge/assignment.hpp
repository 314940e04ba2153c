#pragma once

// Minimum-cost perfect matching on a dense n x n cost matrix (Hungarian method
// with potentials, O(n^3)).

#include <algorithm>
#include <limits>
#include <vector>

#include "forge/error.hpp"

namespace forge {

struct Assignment {
  std::vector<std::size_t> match;  // row i is matched to column match[i]
  double cost = 0.0;
};

// cost is row-major n x n.
inline Assignment solve_assignment(const std::vector<double>& cost, std::size_t n) {
  detail::require(n >= 1 && cost.size() == n * n, "assignment needs a non-empty square cost matrix");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      const double* row = cost.data() + (i0 - 1) * n;
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  out.match.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.match[p[j] - 1] = j - 1;
  // Sum the matched costs in sorted order so transposed problems give the same total.
  std::vector<double> matched(n);
  for (std::size_t i = 0; i < n; ++i) matched[i] = cost[i * n + out.match[i]];
  std::sort(matched.begin(), matched.end());
  for (double c : matched) out.cost += c;
  return out;
}

}  // namespace forge
