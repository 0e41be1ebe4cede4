#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bora/matrix.hpp"

namespace bora {

// One captured merged weight during training.
struct WeightSnapshot {
  long timestep = 0;
  std::string layer_id;
  std::string matrix_label;
  Matrix merged;
};

enum class SeriesMode { consecutive, total };
const char* to_string(SeriesMode m);

struct SeriesPoint {
  long timestep = 0;
  double delta_m = 0.0;
  double delta_d = 0.0;
};

struct DynamicsSeries {
  Dim dim = Dim::row;
  SeriesMode mode = SeriesMode::consecutive;
  std::vector<SeriesPoint> points;
};

enum class ZeroVectorPolicy { strict, lenient };

// Mean absolute change of per-row (d = row) or per-column (d = col) norms
// between two equally shaped weights. Symmetric in its arguments.
double delta_magnitude(const Matrix& w1, const Matrix& w2, Dim d);

// Mean of (1 - cosine) between corresponding rows/columns; lies in [0, 2].
// Strict mode refuses vectors with norm below the floor; lenient mode skips
// such pairs and reports how many were excluded (0 over an empty mean).
double delta_direction(const Matrix& w1, const Matrix& w2, Dim d,
                       ZeroVectorPolicy policy = ZeroVectorPolicy::strict,
                       int* excluded = nullptr);

// Point t holds the metrics between snapshot t and snapshot t-1. Snapshots
// must belong to one (layer_id, matrix_label), have strictly increasing
// timesteps, equal shapes, and there must be at least two of them.
DynamicsSeries consecutive_series(std::span<const WeightSnapshot> snaps,
                                  Dim dim);

struct TotalChange {
  double delta_m = 0.0;
  double delta_d = 0.0;
};
// Metrics between the final and the first snapshot.
TotalChange total_change(std::span<const WeightSnapshot> snaps, Dim dim);

// Pointwise mean of series that share dim, mode, and timestep grid.
DynamicsSeries aggregate_layers(std::span<const DynamicsSeries> series);

// Time-mean of column delta_m divided by time-mean of row delta_m, both from
// consecutive series over the same grid. A value near 1 means magnitude
// updates are balanced across the two dimensions.
double symmetry_ratio(const DynamicsSeries& row_consecutive,
                      const DynamicsSeries& col_consecutive);

}  // namespace bora
