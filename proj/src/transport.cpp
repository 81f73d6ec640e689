#include "ilc/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

#include "ilc/errors.hpp"

namespace ilc {

namespace {

// Network simplex specialised to a complete bipartite graph. Nodes 0..m-1 are
// sources, m..m+n-1 sinks; every basis is a spanning tree of m+n-1 arcs.
//
// Supplies are perturbed (a_i -> K a_i + 1, last demand -> K b + m, K = m+1)
// so that no basic flow is ever zero. That rules out degenerate pivots, and
// with them cycling. The optimal tree of the perturbed problem is optimal for
// the original; flows are recomputed on it with the unperturbed masses.
class NetworkSimplex {
 public:
  NetworkSimplex(std::span<const std::int64_t> supply, std::span<const std::int64_t> demand,
                 std::span<const double> cost)
      : m_(supply.size()), n_(demand.size()), supply_(supply), demand_(demand), cost_(cost) {
    const std::size_t nodes = m_ + n_;
    parent_.assign(nodes, kNone);
    parent_arc_.assign(nodes, kNone);
    depth_.assign(nodes, 0);
    pot_.assign(nodes, 0.0);
    adj_.assign(nodes, {});
    const double max_cost = cost_.empty() ? 0.0 : *std::max_element(cost_.begin(), cost_.end());
    eps_ = 1e-10 * std::max(1.0, max_cost);
    block_ = std::max<std::size_t>(16, static_cast<std::size_t>(std::sqrt(double(m_ * n_))));
  }

  TransportSolution solve() {
    initial_basis();
    std::size_t pivots = 0;
    std::size_t enter;
    while ((enter = find_entering()) != kNone) {
      pivot(enter / n_, enter % n_);
      ++pivots;
    }
    return extract(pivots);
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  struct Arc {
    std::size_t row;
    std::size_t col;  // sink index, node id is m_ + col
    std::int64_t flow;
  };

  double c(std::size_t i, std::size_t j) const { return cost_[i * n_ + j]; }
  bool is_row(std::size_t node) const { return node < m_; }

  void initial_basis() {
    const std::int64_t k = static_cast<std::int64_t>(m_) + 1;
    std::vector<std::int64_t> a(m_), b(n_);
    for (std::size_t i = 0; i < m_; ++i) a[i] = k * supply_[i] + 1;
    for (std::size_t j = 0; j < n_; ++j) b[j] = k * demand_[j];
    b[n_ - 1] += static_cast<std::int64_t>(m_);

    // North-west corner rule; nondegenerate by construction.
    std::size_t i = 0, j = 0;
    std::int64_t s = a[0], d = b[0];
    for (;;) {
      const std::int64_t f = std::min(s, d);
      add_arc({i, j, f});
      s -= f;
      d -= f;
      if (s == 0 && d == 0) break;
      if (s == 0) {
        s = a[++i];
      } else {
        d = b[++j];
      }
    }
    if (arcs_.size() != m_ + n_ - 1)
      throw std::logic_error("transport: initial basis is not a spanning tree");
    depth_[0] = 0;
    pot_[0] = 0.0;
    parent_[0] = kNone;
    rehang(0, kNone, kNone);
  }

  void add_arc(const Arc& arc) {
    const std::size_t id = arcs_.size();
    arcs_.push_back(arc);
    adj_[arc.row].push_back(id);
    adj_[m_ + arc.col].push_back(id);
  }

  std::size_t other_end(std::size_t arc_id, std::size_t node) const {
    const Arc& a = arcs_[arc_id];
    return node == a.row ? m_ + a.col : a.row;
  }

  // Re-derives parent/depth/potential for the subtree hanging below `start`,
  // which is attached to `par` through `via` (kNone for the root).
  void rehang(std::size_t start, std::size_t par, std::size_t via) {
    stack_.clear();
    stack_.push_back(start);
    parent_[start] = par;
    parent_arc_[start] = via;
    if (par != kNone) set_from_parent(start);
    while (!stack_.empty()) {
      const std::size_t v = stack_.back();
      stack_.pop_back();
      for (std::size_t id : adj_[v]) {
        if (id == parent_arc_[v]) continue;
        const std::size_t w = other_end(id, v);
        parent_[w] = v;
        parent_arc_[w] = id;
        set_from_parent(w);
        stack_.push_back(w);
      }
    }
  }

  void set_from_parent(std::size_t v) {
    const std::size_t p = parent_[v];
    const Arc& a = arcs_[parent_arc_[v]];
    depth_[v] = depth_[p] + 1;
    pot_[v] = c(a.row, a.col) - pot_[p];  // u_row + v_col = c
  }

  double reduced(std::size_t i, std::size_t j) const { return c(i, j) - pot_[i] - pot_[m_ + j]; }

  // Block search pricing: best candidate within the first block that has one.
  std::size_t find_entering() {
    const std::size_t total = m_ * n_;
    std::size_t best = kNone;
    double best_rc = -eps_;
    std::size_t scanned = 0, in_block = 0;
    std::size_t e = next_;
    while (scanned < total) {
      const double rc = reduced(e / n_, e % n_);
      if (rc < best_rc) {
        best_rc = rc;
        best = e;
      }
      ++scanned;
      if (++e == total) e = 0;
      if (++in_block == block_) {
        if (best != kNone) break;
        in_block = 0;
      }
    }
    next_ = e;
    return best;
  }

  void pivot(std::size_t row, std::size_t col) {
    const std::size_t a_node = row;
    const std::size_t b_node = m_ + col;

    // Arcs on the cycle with their sign: +1 gains flow, -1 loses.
    path_.clear();
    std::size_t u = a_node, v = b_node;
    while (u != v) {
      if (depth_[u] >= depth_[v]) {
        // a-side: traversal parent(u) -> u; losing when u is a source.
        path_.push_back({parent_arc_[u], is_row(u) ? -1 : +1, u});
        u = parent_[u];
      } else {
        // b-side: traversal v -> parent(v); losing when v is a sink.
        path_.push_back({parent_arc_[v], is_row(v) ? +1 : -1, v});
        v = parent_[v];
      }
    }

    std::int64_t theta = 0;
    std::size_t leave = kNone;
    for (std::size_t k = 0; k < path_.size(); ++k) {
      if (path_[k].sign < 0) {
        const std::int64_t f = arcs_[path_[k].arc].flow;
        if (leave == kNone || f < theta) {
          theta = f;
          leave = k;
        }
      }
    }
    for (const auto& step : path_) arcs_[step.arc].flow += step.sign * theta;

    // Detach the leaving arc, reuse its slot for the entering arc.
    const std::size_t leave_id = path_[leave].arc;
    const std::size_t child = path_[leave].child;
    remove_adj(arcs_[leave_id].row, leave_id);
    remove_adj(m_ + arcs_[leave_id].col, leave_id);
    arcs_[leave_id] = {row, col, theta};
    adj_[a_node].push_back(leave_id);
    adj_[b_node].push_back(leave_id);

    // The detached subtree rooted at `child` holds exactly one entering end.
    if (in_subtree(a_node, child)) {
      rehang(a_node, b_node, leave_id);
    } else {
      rehang(b_node, a_node, leave_id);
    }
  }

  bool in_subtree(std::size_t node, std::size_t root) const {
    while (node != kNone && depth_[node] >= depth_[root]) {
      if (node == root) return true;
      node = parent_[node];
    }
    return false;
  }

  void remove_adj(std::size_t node, std::size_t id) {
    auto& list = adj_[node];
    list.erase(std::find(list.begin(), list.end(), id));
  }

  TransportSolution extract(std::size_t pivots) const {
    const std::size_t nodes = m_ + n_;
    std::vector<std::size_t> order(nodes);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return depth_[x] > depth_[y]; });
    std::vector<std::int64_t> excess(nodes);
    for (std::size_t i = 0; i < m_; ++i) excess[i] = supply_[i];
    for (std::size_t j = 0; j < n_; ++j) excess[m_ + j] = -demand_[j];

    TransportSolution sol;
    sol.pivots = pivots;
    for (std::size_t v : order) {
      if (parent_[v] == kNone) continue;
      const Arc& a = arcs_[parent_arc_[v]];
      const std::int64_t flow = is_row(v) ? excess[v] : -excess[v];
      excess[parent_[v]] += excess[v];
      if (flow < 0) throw std::logic_error("transport: negative flow in optimal basis");
      if (flow > 0) {
        sol.flows.push_back({a.row, a.col, flow});
        sol.cost += static_cast<double>(flow) * c(a.row, a.col);
      }
    }
    std::sort(sol.flows.begin(), sol.flows.end(), [](const auto& x, const auto& y) {
      return std::tie(x.source, x.target) < std::tie(y.source, y.target);
    });
    return sol;
  }

  struct PathStep {
    std::size_t arc;
    int sign;
    std::size_t child;  // tree node whose parent arc this is
  };

  std::size_t m_, n_;
  std::span<const std::int64_t> supply_, demand_;
  std::span<const double> cost_;
  double eps_ = 0.0;
  std::size_t block_ = 16;
  std::size_t next_ = 0;

  std::vector<Arc> arcs_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<std::size_t> parent_, parent_arc_, depth_;
  std::vector<double> pot_;
  std::vector<std::size_t> stack_;
  std::vector<PathStep> path_;
};

std::int64_t integral_mass(double v) {
  const double r = std::round(v);
  if (v < 0.0 || std::abs(v - r) > 1e-9 * std::max(1.0, std::abs(v)) || r > 9.0e15)
    throw MassMismatch(fmt::format("bin mass {} is not a non-negative integer", v));
  return static_cast<std::int64_t>(r);
}

}  // namespace

TransportSolution solve_transport(std::span<const std::int64_t> supply,
                                  std::span<const std::int64_t> demand,
                                  std::span<const double> cost) {
  const std::size_t m = supply.size(), n = demand.size();
  if (cost.size() != m * n) throw std::invalid_argument("transport: cost matrix size mismatch");
  std::int64_t total_s = 0, total_d = 0;
  for (auto s : supply) {
    if (s < 0) throw MassMismatch("transport: negative supply");
    total_s += s;
  }
  for (auto d : demand) {
    if (d < 0) throw MassMismatch("transport: negative demand");
    total_d += d;
  }
  if (total_s != total_d)
    throw MassMismatch(fmt::format("transport: total masses differ ({} vs {})", total_s, total_d));

  // Solve on the non-empty rows/columns only.
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < m; ++i)
    if (supply[i] > 0) rows.push_back(i);
  for (std::size_t j = 0; j < n; ++j)
    if (demand[j] > 0) cols.push_back(j);
  if (rows.empty()) return {};

  std::vector<std::int64_t> a(rows.size()), b(cols.size());
  std::vector<double> c(rows.size() * cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    a[r] = supply[rows[r]];
    for (std::size_t k = 0; k < cols.size(); ++k) c[r * cols.size() + k] = cost[rows[r] * n + cols[k]];
  }
  for (std::size_t k = 0; k < cols.size(); ++k) b[k] = demand[cols[k]];

  TransportSolution sol = NetworkSimplex(a, b, c).solve();
  for (auto& f : sol.flows) {
    f.source = rows[f.source];
    f.target = cols[f.target];
  }
  return sol;
}

namespace {

void check_compatible(const BinnedPdf& f, const BinnedPdf& g) {
  if (!(f.grid == g.grid)) throw GridMismatch("EMD requires both histograms on the same grid");
  if (f.grid.axes.size() != 2 || f.counts.size() != f.grid.cell_count() ||
      g.counts.size() != g.grid.cell_count())
    throw GridMismatch("histogram counts do not match a 2D grid");
}

}  // namespace

namespace {

TransportPlan solve_oriented(const BinnedPdf& f, const BinnedPdf& g) {
  const GridAxis& ax0 = f.grid.axes[0];
  const GridAxis& ax1 = f.grid.axes[1];
  const std::size_t cells = f.grid.cell_count();

  std::vector<std::size_t> src, dst;
  std::vector<std::int64_t> a, b;
  std::int64_t ma = 0, mb = 0;
  for (std::size_t k = 0; k < cells; ++k) {
    const std::int64_t fa = integral_mass(f.counts[k]);
    const std::int64_t gb = integral_mass(g.counts[k]);
    ma += fa;
    mb += gb;
    if (fa > 0) {
      src.push_back(k);
      a.push_back(fa);
    }
    if (gb > 0) {
      dst.push_back(k);
      b.push_back(gb);
    }
  }
  if (ma != mb)
    throw MassMismatch(fmt::format("histogram masses differ ({} vs {})", ma, mb));

  auto center = [&](std::size_t k) {
    return std::pair{ax0.center(k / ax1.bins), ax1.center(k % ax1.bins)};
  };
  std::vector<double> cost(src.size() * dst.size());
  for (std::size_t r = 0; r < src.size(); ++r) {
    const auto [x0, y0] = center(src[r]);
    for (std::size_t s = 0; s < dst.size(); ++s) {
      const auto [x1, y1] = center(dst[s]);
      cost[r * dst.size() + s] = std::hypot(x1 - x0, y1 - y0);
    }
  }

  TransportSolution sol = solve_transport(a, b, cost);
  TransportPlan plan;
  plan.cost = sol.cost;
  plan.moves.reserve(sol.flows.size());
  for (const auto& fl : sol.flows) {
    const std::size_t s = src[fl.source], t = dst[fl.target];
    plan.moves.push_back({{s / ax1.bins, s % ax1.bins},
                          {t / ax1.bins, t % ax1.bins},
                          static_cast<double>(fl.mass)});
  }
  return plan;
}

}  // namespace

std::pair<double, TransportPlan> emd_with_plan(const BinnedPdf& f, const BinnedPdf& g) {
  check_compatible(f, g);
  // Both argument orders solve the same oriented problem, so the distance is
  // symmetric to the last bit.
  const bool flip = g.counts < f.counts;
  TransportPlan plan = flip ? solve_oriented(g, f) : solve_oriented(f, g);
  if (flip)
    for (auto& m : plan.moves) std::swap(m.source, m.target);
  std::sort(plan.moves.begin(), plan.moves.end(), [](const TransportMove& a, const TransportMove& b) {
    return std::tie(a.source.i, a.source.j, a.target.i, a.target.j) <
           std::tie(b.source.i, b.source.j, b.target.i, b.target.j);
  });
  return {plan.cost, std::move(plan)};
}

double emd(const BinnedPdf& f, const BinnedPdf& g) { return emd_with_plan(f, g).first; }

}  // namespace ilc
