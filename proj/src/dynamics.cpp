#include "bora/dynamics.hpp"

#include <cmath>

#include "bora/errors.hpp"

namespace bora {

namespace {

// Gathers the i-th row or column as (norm1, norm2, dot) without allocating.
struct VectorPair {
  double n1 = 0.0, n2 = 0.0, dot = 0.0;
};

VectorPair vector_pair(const Matrix& w1, const Matrix& w2, Dim d, int i) {
  VectorPair p;
  const int n = d == Dim::row ? w1.cols : w1.rows;
  for (int k = 0; k < n; ++k) {
    const double a = d == Dim::row ? w1(i, k) : w1(k, i);
    const double b = d == Dim::row ? w2(i, k) : w2(k, i);
    p.n1 += a * a;
    p.n2 += b * b;
    p.dot += a * b;
  }
  p.n1 = std::sqrt(p.n1);
  p.n2 = std::sqrt(p.n2);
  return p;
}

void check_same_shape(const Matrix& w1, const Matrix& w2, const char* op) {
  if (w1.rows != w2.rows || w1.cols != w2.cols)
    throw ShapeError(std::string(op) + ": shapes disagree: " + w1.shape_str() +
                     " vs " + w2.shape_str());
  if (w1.empty()) throw ShapeError(std::string(op) + ": matrices are empty");
}

void check_snapshots(std::span<const WeightSnapshot> snaps, const char* op) {
  if (snaps.size() < 2)
    throw InsufficientDataError(std::string(op) + ": need at least 2 snapshots, got " +
                                std::to_string(snaps.size()));
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    if (snaps[i].layer_id != snaps[0].layer_id ||
        snaps[i].matrix_label != snaps[0].matrix_label)
      throw ContractError(std::string(op) +
                          ": snapshots mix layers or matrices (" +
                          snaps[0].layer_id + "/" + snaps[0].matrix_label +
                          " vs " + snaps[i].layer_id + "/" +
                          snaps[i].matrix_label + ")");
    if (i > 0 && snaps[i].timestep <= snaps[i - 1].timestep)
      throw ContractError(std::string(op) +
                          ": timesteps must be strictly increasing (" +
                          std::to_string(snaps[i - 1].timestep) + " then " +
                          std::to_string(snaps[i].timestep) + ")");
    check_same_shape(snaps[0].merged, snaps[i].merged, op);
  }
}

}  // namespace

const char* to_string(SeriesMode m) {
  return m == SeriesMode::consecutive ? "consecutive" : "total";
}

double delta_magnitude(const Matrix& w1, const Matrix& w2, Dim d) {
  check_same_shape(w1, w2, "delta_magnitude");
  const int h = d == Dim::row ? w1.rows : w1.cols;
  double acc = 0.0;
  for (int i = 0; i < h; ++i) {
    const VectorPair p = vector_pair(w1, w2, d, i);
    acc += std::abs(p.n1 - p.n2);
  }
  return acc / h;
}

double delta_direction(const Matrix& w1, const Matrix& w2, Dim d,
                       ZeroVectorPolicy policy, int* excluded) {
  check_same_shape(w1, w2, "delta_direction");
  const int h = d == Dim::row ? w1.rows : w1.cols;
  double acc = 0.0;
  int used = 0, skipped = 0;
  for (int i = 0; i < h; ++i) {
    const VectorPair p = vector_pair(w1, w2, d, i);
    if (p.n1 < kNormFloor || p.n2 < kNormFloor) {
      if (policy == ZeroVectorPolicy::strict)
        throw DegenerateNormError(
            "delta_direction: " + std::string(to_string(d)) + " " +
            std::to_string(i) + " has norm below " +
            std::to_string(kNormFloor));
      ++skipped;
      continue;
    }
    acc += 1.0 - p.dot / (p.n1 * p.n2);
    ++used;
  }
  if (excluded) *excluded = skipped;
  return used == 0 ? 0.0 : acc / used;
}

DynamicsSeries consecutive_series(std::span<const WeightSnapshot> snaps,
                                  Dim dim) {
  check_snapshots(snaps, "consecutive_series");
  DynamicsSeries series;
  series.dim = dim;
  series.mode = SeriesMode::consecutive;
  for (std::size_t i = 1; i < snaps.size(); ++i) {
    series.points.push_back(
        {snaps[i].timestep,
         delta_magnitude(snaps[i - 1].merged, snaps[i].merged, dim),
         delta_direction(snaps[i - 1].merged, snaps[i].merged, dim)});
  }
  return series;
}

TotalChange total_change(std::span<const WeightSnapshot> snaps, Dim dim) {
  check_snapshots(snaps, "total_change");
  const Matrix& first = snaps.front().merged;
  const Matrix& last = snaps.back().merged;
  return {delta_magnitude(first, last, dim),
          delta_direction(first, last, dim)};
}

DynamicsSeries aggregate_layers(std::span<const DynamicsSeries> series) {
  if (series.empty())
    throw InsufficientDataError("aggregate_layers: no series given");
  DynamicsSeries out = series[0];
  for (std::size_t s = 1; s < series.size(); ++s) {
    const DynamicsSeries& cur = series[s];
    if (cur.dim != out.dim || cur.mode != out.mode)
      throw AlignmentError("aggregate_layers: series " + std::to_string(s) +
                           " has dim/mode " + to_string(cur.dim) + "/" +
                           to_string(cur.mode) + ", expected " +
                           to_string(out.dim) + "/" + to_string(out.mode));
    if (cur.points.size() != out.points.size())
      throw AlignmentError("aggregate_layers: series " + std::to_string(s) +
                           " has " + std::to_string(cur.points.size()) +
                           " points, expected " +
                           std::to_string(out.points.size()));
    for (std::size_t i = 0; i < out.points.size(); ++i) {
      if (cur.points[i].timestep != out.points[i].timestep)
        throw AlignmentError(
            "aggregate_layers: timestep grids differ at index " +
            std::to_string(i) + " (" + std::to_string(cur.points[i].timestep) +
            " vs " + std::to_string(out.points[i].timestep) + ")");
      out.points[i].delta_m += cur.points[i].delta_m;
      out.points[i].delta_d += cur.points[i].delta_d;
    }
  }
  const double n = static_cast<double>(series.size());
  for (SeriesPoint& p : out.points) {
    p.delta_m /= n;
    p.delta_d /= n;
  }
  return out;
}

double symmetry_ratio(const DynamicsSeries& row_consecutive,
                      const DynamicsSeries& col_consecutive) {
  if (row_consecutive.dim != Dim::row || col_consecutive.dim != Dim::col)
    throw ContractError("symmetry_ratio: expected a row series and a col series");
  if (row_consecutive.mode != SeriesMode::consecutive ||
      col_consecutive.mode != SeriesMode::consecutive)
    throw ContractError("symmetry_ratio: both series must be consecutive");
  if (row_consecutive.points.empty() || col_consecutive.points.empty())
    throw InsufficientDataError("symmetry_ratio: empty series");
  if (row_consecutive.points.size() != col_consecutive.points.size())
    throw AlignmentError("symmetry_ratio: series lengths differ (" +
                         std::to_string(row_consecutive.points.size()) +
                         " vs " +
                         std::to_string(col_consecutive.points.size()) + ")");
  double row_mean = 0.0, col_mean = 0.0;
  for (std::size_t i = 0; i < row_consecutive.points.size(); ++i) {
    if (row_consecutive.points[i].timestep !=
        col_consecutive.points[i].timestep)
      throw AlignmentError("symmetry_ratio: timestep grids differ at index " +
                           std::to_string(i));
    row_mean += row_consecutive.points[i].delta_m;
    col_mean += col_consecutive.points[i].delta_m;
  }
  row_mean /= static_cast<double>(row_consecutive.points.size());
  col_mean /= static_cast<double>(col_consecutive.points.size());
  if (row_mean == 0.0)
    throw UndefinedRatioError(
        "symmetry_ratio: row magnitude changes average to zero");
  return col_mean / row_mean;
}

}  // namespace bora
