#pragma once

#include <limits>
#include <vector>

namespace cotflow {

// Dense Jonker-Volgenant linear assignment on a square row-major cost
// matrix: column reduction, reduction transfer, two augmenting row
// reduction sweeps, then shortest augmenting paths for the leftover rows.
// Returns row -> column; scans take the first minimum, so equal-cost
// optima resolve to the smallest index and the result is deterministic.
inline std::vector<int> solve_assignment(int n, const std::vector<double>& cost) {
  constexpr double kBig = std::numeric_limits<double>::max();
  std::vector<int> rowsol(n, -1), colsol(n, -1);
  std::vector<double> v(n, 0.0);
  std::vector<int> matches(n, 0);

  // column reduction, right to left
  for (int j = n - 1; j >= 0; --j) {
    double min = cost[j];
    int imin = 0;
    for (int i = 1; i < n; ++i) {
      const double c = cost[static_cast<std::size_t>(i) * n + j];
      if (c < min) {
        min = c;
        imin = i;
      }
    }
    v[j] = min;
    if (++matches[imin] == 1) {
      rowsol[imin] = j;
      colsol[j] = imin;
    }
  }

  // reduction transfer from singly-assigned rows
  std::vector<int> free_rows;
  free_rows.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (matches[i] == 0) {
      free_rows.push_back(i);
    } else if (matches[i] == 1) {
      const int j1 = rowsol[i];
      double min = kBig;
      for (int j = 0; j < n; ++j)
        if (j != j1)
          min = std::min(min, cost[static_cast<std::size_t>(i) * n + j] - v[j]);
      v[j1] -= min;
    }
  }

  // augmenting row reduction, two sweeps
  for (int sweep = 0; sweep < 2; ++sweep) {
    int k = 0;
    const int prev_free = static_cast<int>(free_rows.size());
    int num_free = 0;
    while (k < prev_free) {
      const int i = free_rows[k++];
      const double* ci = cost.data() + static_cast<std::size_t>(i) * n;
      double umin = ci[0] - v[0], usubmin = kBig;
      int j1 = 0, j2 = -1;
      for (int j = 1; j < n; ++j) {
        const double h = ci[j] - v[j];
        if (h < usubmin) {
          if (h >= umin) {
            usubmin = h;
            j2 = j;
          } else {
            usubmin = umin;
            umin = h;
            j2 = j1;
            j1 = j;
          }
        }
      }
      int i0 = colsol[j1];
      if (umin < usubmin) {
        v[j1] -= usubmin - umin;
      } else if (i0 >= 0) {
        j1 = j2;
        i0 = colsol[j1];
      }
      rowsol[i] = j1;
      colsol[j1] = i;
      if (i0 >= 0) {
        // reclaimed row: revisit immediately if the dual price moved,
        // otherwise queue it for the next sweep
        if (umin < usubmin)
          free_rows[--k] = i0;
        else
          free_rows[num_free++] = i0;
      }
    }
    free_rows.resize(num_free);
  }

  // shortest augmenting paths for the remaining free rows
  std::vector<double> d(n);
  std::vector<int> pred(n), col(n);
  for (const int free_row : free_rows) {
    for (int j = 0; j < n; ++j) {
      d[j] = cost[static_cast<std::size_t>(free_row) * n + j] - v[j];
      pred[j] = free_row;
      col[j] = j;
    }
    int low = 0, up = 0, last = -1, endofpath = -1;
    double min = 0.0;
    bool found = false;
    while (!found) {
      if (up == low) {
        last = low - 1;
        min = d[col[up++]];
        for (int k = up; k < n; ++k) {
          const int j = col[k];
          const double h = d[j];
          if (h <= min) {
            if (h < min) {
              up = low;
              min = h;
            }
            col[k] = col[up];
            col[up++] = j;
          }
        }
        for (int k = low; k < up && !found; ++k) {
          if (colsol[col[k]] < 0) {
            endofpath = col[k];
            found = true;
          }
        }
      }
      if (!found) {
        const int j1 = col[low++];
        const int i = colsol[j1];
        const double* ci = cost.data() + static_cast<std::size_t>(i) * n;
        const double h = ci[j1] - v[j1] - min;
        for (int k = up; k < n; ++k) {
          const int j = col[k];
          const double v2 = ci[j] - v[j] - h;
          if (v2 < d[j]) {
            d[j] = v2;
            pred[j] = i;
            if (v2 == min) {
              if (colsol[j] < 0) {
                endofpath = j;
                found = true;
                break;
              }
              col[k] = col[up];
              col[up++] = j;
            }
          }
        }
      }
    }
    for (int k = 0; k <= last; ++k) {
      const int j1 = col[k];
      v[j1] += d[j1] - min;
    }
    // flip assignments along the alternating path
    int i;
    do {
      i = pred[endofpath];
      colsol[endofpath] = i;
      const int j1 = rowsol[i];
      rowsol[i] = endofpath;
      endofpath = j1;
    } while (i != free_row);
  }
  return rowsol;
}

inline double assignment_cost(int n, const std::vector<double>& cost,
                              const std::vector<int>& rowsol) {
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    total += cost[static_cast<std::size_t>(i) * n + rowsol[i]];
  return total;
}

}  // namespace cotflow
