#include "fairgen/transport.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace fairgen {

Assignment solve_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("solve_assignment: cost must be square");
  if (!cost.allFinite()) throw std::invalid_argument("solve_assignment: non-finite cost");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual start of each augmenting path.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  out.row_to_col.assign(n, -1);
  for (int j = 1; j <= n; ++j) out.row_to_col[match[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) out.cost += cost(i, out.row_to_col[i]);
  return out;
}

namespace {

struct Cell {
  int row, col;
};

}  // namespace

TransportPlan solve_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply,
                              const Eigen::VectorXd& demand) {
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  if (supply.size() != m || demand.size() != n) throw std::invalid_argument("solve_transport: marginal size mismatch");
  if (m == 0 || n == 0) throw std::invalid_argument("solve_transport: empty problem");
  if (!cost.allFinite()) throw std::invalid_argument("solve_transport: non-finite cost");
  if ((supply.array() < 0).any() || (demand.array() < 0).any())
    throw std::invalid_argument("solve_transport: negative marginal");
  const double total = supply.sum();
  if (std::abs(total - demand.sum()) > 1e-9 * std::max(1.0, total))
    throw std::invalid_argument("solve_transport: supply and demand totals differ");

  TransportPlan out;
  out.plan = Eigen::MatrixXd::Zero(m, n);
  std::vector<Cell> basis;
  basis.reserve(m + n - 1);
  {
    Eigen::VectorXd s = supply, d = demand;
    int i = 0, j = 0;
    for (;;) {
      const double x = std::min(s(i), d(j));
      out.plan(i, j) = x;
      basis.push_back({i, j});
      s(i) -= x;
      d(j) -= x;
      if (i == m - 1 && j == n - 1) break;
      if (j == n - 1 || (i < m - 1 && s(i) <= d(j)))
        ++i;
      else
        ++j;
    }
  }

  const double scale = std::max(1.0, cost.cwiseAbs().maxCoeff());
  const double eps = 1e-12 * scale;
  const int max_pivots = 50 * (m + n) * (m + n) + 1000;
  std::vector<std::vector<int>> row_cells(m), col_cells(n);  // indices into basis
  std::vector<char> seen_u(m), seen_v(n);
  std::vector<int> parent(m + n);
  std::vector<int> parent_cell(m + n);

  auto rebuild = [&] {
    for (auto& r : row_cells) r.clear();
    for (auto& c : col_cells) c.clear();
    for (int b = 0; b < static_cast<int>(basis.size()); ++b) {
      row_cells[basis[b].row].push_back(b);
      col_cells[basis[b].col].push_back(b);
    }
  };

  out.u = Eigen::VectorXd::Zero(m);
  out.v = Eigen::VectorXd::Zero(n);
  for (;;) {
    rebuild();
    // Potentials on the basis tree, rooted at row 0. Nodes 0..m-1 are rows,
    // m..m+n-1 columns.
    std::fill(seen_u.begin(), seen_u.end(), 0);
    std::fill(seen_v.begin(), seen_v.end(), 0);
    std::deque<int> queue{0};
    seen_u[0] = 1;
    out.u(0) = 0.0;
    parent[0] = -1;
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop_front();
      if (node < m) {
        for (int b : row_cells[node]) {
          const int c = basis[b].col;
          if (seen_v[c]) continue;
          seen_v[c] = 1;
          out.v(c) = cost(node, c) - out.u(node);
          parent[m + c] = node;
          parent_cell[m + c] = b;
          queue.push_back(m + c);
        }
      } else {
        const int c = node - m;
        for (int b : col_cells[c]) {
          const int r = basis[b].row;
          if (seen_u[r]) continue;
          seen_u[r] = 1;
          out.u(r) = cost(r, c) - out.v(c);
          parent[r] = node;
          parent_cell[r] = b;
          queue.push_back(r);
        }
      }
    }

    int enter_i = -1, enter_j = -1;
    double most_negative = -eps;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double reduced = cost(i, j) - out.u(i) - out.v(j);
        if (reduced < most_negative) {
          most_negative = reduced;
          enter_i = i;
          enter_j = j;
        }
      }
    if (enter_i < 0) break;
    if (++out.pivots > max_pivots) throw std::runtime_error("solve_transport: pivot limit exceeded");

    // Tree path from column enter_j back to row enter_i: walk both to the
    // root and cut at the lowest common ancestor.
    auto ancestors = [&](int node) {
      std::vector<int> chain;
      for (int x = node; x != -1; x = parent[x]) chain.push_back(x);
      return chain;
    };
    const auto from_row = ancestors(enter_i);
    const auto from_col = ancestors(m + enter_j);
    std::size_t a = from_row.size(), b = from_col.size();
    while (a > 0 && b > 0 && from_row[a - 1] == from_col[b - 1]) {
      --a;
      --b;
    }
    // Cycle cells in order starting next to the entering cell on row
    // enter_i: cells along from_row (up to the ancestor), then down to the
    // column.
    std::vector<int> cycle;
    for (std::size_t t = 0; t < a; ++t) cycle.push_back(parent_cell[from_row[t]]);
    std::vector<int> down;
    for (std::size_t t = 0; t < b; ++t) down.push_back(parent_cell[from_col[t]]);
    cycle.insert(cycle.end(), down.rbegin(), down.rend());

    // Signs alternate: the entering cell is +, cycle[0] shares its row and
    // is -, and so on.
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (std::size_t t = 0; t < cycle.size(); t += 2) {
      const auto& c = basis[cycle[t]];
      if (out.plan(c.row, c.col) < theta) {
        theta = out.plan(c.row, c.col);
        leave = cycle[t];
      }
    }
    for (std::size_t t = 0; t < cycle.size(); ++t) {
      const auto& c = basis[cycle[t]];
      out.plan(c.row, c.col) += (t % 2 == 0) ? -theta : theta;
    }
    out.plan(enter_i, enter_j) += theta;
    out.plan(basis[leave].row, basis[leave].col) = 0.0;
    basis[leave] = {enter_i, enter_j};
  }

  out.plan = out.plan.cwiseMax(0.0);
  out.cost = (cost.array() * out.plan.array()).sum();
  return out;
}

Eigen::MatrixXd solve_linear_ot(const Eigen::MatrixXd& cost, const Eigen::VectorXd& h, const Eigen::VectorXd& g) {
  const auto n = h.size();
  bool uniform = n == g.size() && n > 0 && cost.rows() == n && cost.cols() == n;
  if (uniform) {
    const double w = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n && uniform; ++i) uniform = std::abs(h(i) - w) <= 1e-15 && std::abs(g(i) - w) <= 1e-15;
  }
  if (!uniform) return solve_transport(cost, h, g).plan;
  const auto a = solve_assignment(cost);
  Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) plan(i, a.row_to_col[i]) = h(i);
  return plan;
}

}  // namespace fairgen
