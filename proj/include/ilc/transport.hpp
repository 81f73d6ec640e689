#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ilc/embedding.hpp"

namespace ilc {

/// One entry of a transport plan: `mass` units move from source bin to
/// target bin. Bins are given as (axis0, axis1) index pairs.
struct BinIndex {
  std::size_t i = 0;
  std::size_t j = 0;
  friend bool operator==(const BinIndex&, const BinIndex&) = default;
};

struct TransportMove {
  BinIndex source;
  BinIndex target;
  double mass = 0.0;
};

struct TransportPlan {
  std::vector<TransportMove> moves;
  double cost = 0.0;
};

/// Earth Mover's Distance between two histograms on the same grid, using
/// raw bin counts as mass and Euclidean distance between bin centres as the
/// ground metric. Throws GridMismatch / MassMismatch; bin counts must be
/// integral.
double emd(const BinnedPdf& f, const BinnedPdf& g);
std::pair<double, TransportPlan> emd_with_plan(const BinnedPdf& f, const BinnedPdf& g);

/// Flow on one arc of a solved transportation problem (flat indices).
struct TransportFlow {
  std::size_t source = 0;
  std::size_t target = 0;
  std::int64_t mass = 0;
};

struct TransportSolution {
  std::vector<TransportFlow> flows;
  double cost = 0.0;
  std::size_t pivots = 0;
};

/// Exact solver for the balanced transportation problem
///   min sum_ij x_ij c_ij  s.t.  sum_j x_ij = supply_i, sum_i x_ij = demand_j, x >= 0
/// with `cost` row-major (supply.size() x demand.size()). Primal network
/// simplex over spanning-tree bases; integral masses make the optimum exact.
TransportSolution solve_transport(std::span<const std::int64_t> supply,
                                  std::span<const std::int64_t> demand,
                                  std::span<const double> cost);

}  // namespace ilc
