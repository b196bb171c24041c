#pragma once

// Test-only reference computations, independent of the Laguerre/Newton path.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <queue>
#include <vector>

#include "lagflow/geometry.hpp"

namespace lagflow::oracle {

struct DiscreteTransport {
  double cost = 0.0;                 // sum_p mass * |x_p - M_sigma(p)|^2
  std::vector<std::size_t> owner;    // sink of each source point
  std::vector<Point2> sources;
};

/// Exact optimal assignment of a res x res grid of equal point masses on the
/// axis-aligned rectangle `box` to `sinks`, each sink receiving
/// res*res / sinks.size() points. Successive shortest paths on the residual
/// graph compressed to the sinks; reduced-cost heaps per sink pair.
inline DiscreteTransport grid_assignment(const std::vector<Point2>& sinks, BoundingBox box, int res) {
  const std::size_t k_count = sinks.size();
  const std::size_t n_points = static_cast<std::size_t>(res) * res;
  const std::size_t capacity = n_points / k_count;

  DiscreteTransport out;
  out.sources.reserve(n_points);
  const double hx = box.width() / res, hy = box.height() / res;
  for (int j = 0; j < res; ++j)
    for (int i = 0; i < res; ++i) out.sources.push_back({box.lo.x + (i + 0.5) * hx, box.lo.y + (j + 0.5) * hy});

  auto cost = [&](std::size_t p, std::size_t k) { return norm2(out.sources[p] - sinks[k]); };
  using Entry = std::pair<double, std::size_t>;
  using MinHeap = std::priority_queue<Entry, std::vector<Entry>, std::greater<>>;
  std::vector<MinHeap> heaps(k_count * k_count);
  std::vector<std::size_t> owner(n_points, k_count), count(k_count, 0);

  auto place = [&](std::size_t p, std::size_t j) {
    owner[p] = j;
    for (std::size_t k = 0; k < k_count; ++k)
      if (k != j) heaps[j * k_count + k].push({cost(p, k) - cost(p, j), p});
  };
  auto top = [&](std::size_t j, std::size_t k) -> const Entry* {
    auto& h = heaps[j * k_count + k];
    while (!h.empty() && owner[h.top().second] != j) h.pop();
    return h.empty() ? nullptr : &h.top();
  };

  std::vector<double> dist(k_count);
  std::vector<std::ptrdiff_t> pred(k_count);
  for (std::size_t q = 0; q < n_points; ++q) {
    for (std::size_t k = 0; k < k_count; ++k) {
      dist[k] = cost(q, k);
      pred[k] = -1;
    }
    for (std::size_t round = 0; round < k_count; ++round) {
      bool changed = false;
      for (std::size_t j = 0; j < k_count; ++j) {
        if (count[j] == 0) continue;
        for (std::size_t k = 0; k < k_count; ++k) {
          if (k == j) continue;
          const Entry* e = top(j, k);
          if (e && dist[j] + e->first < dist[k] - 1e-15) {
            dist[k] = dist[j] + e->first;
            pred[k] = static_cast<std::ptrdiff_t>(j);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    std::size_t target = k_count;
    for (std::size_t k = 0; k < k_count; ++k)
      if (count[k] < capacity && (target == k_count || dist[k] < dist[target])) target = k;
    std::size_t k = target;
    while (pred[k] >= 0) {
      const auto j = static_cast<std::size_t>(pred[k]);
      const std::size_t moved = top(j, k)->second;
      place(moved, k);
      k = j;
    }
    place(q, k);
    ++count[target];
  }

  const double mass = box.width() * box.height() / static_cast<double>(n_points);
  for (std::size_t p = 0; p < n_points; ++p) out.cost += mass * cost(p, owner[p]);
  out.owner = std::move(owner);
  return out;
}

}  // namespace lagflow::oracle
