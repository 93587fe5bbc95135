#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace sglab {

// Finite-difference weights on arbitrary nodes (Fornberg's recursion).
// Returns w such that f^(m)(x0) ~= sum_i w[i] * f(nodes[i]).
std::vector<double> fd_weights(double x0, const std::vector<double>& nodes, int m);

// Chebyshev-Gauss-Lobatto nodes on [-a, a], ascending. n >= 2.
std::vector<double> chebyshev_nodes(double a, int n);

// Static-partition parallel map over [0, n). Results must be written to
// disjoint slots by the callee; scheduling cannot change the output.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

inline int default_threads() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace sglab
