#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bora/grad_check.hpp"
#include "bora/matrix.hpp"
#include "bora/tape.hpp"

namespace bora {

// Weight orientation, used everywhere: a layer's weight W is stored as
// out_features x in_features (h_r x h_c). Row i of W is the weight vector of
// output feature i; column j collects the coefficients applied to input
// feature j. The layer maps a batch X (n x h_c) to Y = X * W^T, i.e.
// Y[i][j] = sum_l X[i][l] * W[j][l]. There is no bias.
//
// Methods, with s = alpha/rank (or alpha/sqrt(rank) when rank-stabilized):
//   lora      W = W0 + s*A*B
//   dora      W = m_col ∘ colnormalize(W0 + s*A*B)
//   dora_row  W = m_row ∘ rownormalize(W0 + s*A*B)
//   bora      W = m_col ∘ colnormalize(m_row ∘ rownormalize(W0 + s*A*B))
// where ∘ scales the named dimension and colnormalize/rownormalize divide
// each column/row by its Euclidean norm.
enum class Method { lora, dora, dora_row, bora };
enum class ScalingMode { standard, rank_stabilized };
// exact: gradients flow through the normalization denominators.
// detached: denominators are treated as constants during backward.
enum class NormMode { exact, detached };

const char* method_name(Method m);
Method parse_method(const std::string& name);
const char* scaling_name(ScalingMode m);
ScalingMode parse_scaling(const std::string& name);
const char* norm_mode_name(NormMode m);
NormMode parse_norm_mode(const std::string& name);

struct AdapterConfig {
  Method method = Method::lora;
  int rank = 4;
  double alpha = 8.0;
  ScalingMode scaling = ScalingMode::standard;
  NormMode norm_mode = NormMode::exact;
  double floor = kNormFloor;
  ZeroNormPolicy norm_policy = ZeroNormPolicy::strict;
  std::uint64_t seed = 0;

  double scale() const;
};

// One adapted linear layer. w0 is frozen; a, b and the magnitude vectors the
// method uses are trainable. Unused magnitude vectors stay empty.
struct AdaptedLinear {
  Matrix w0;
  Matrix a;      // h_r x rank
  Matrix b;      // rank x h_c
  Vector m_row;  // length h_r when used
  Vector m_col;  // length h_c when used
  AdapterConfig config;

  int out_features() const { return w0.rows; }
  int in_features() const { return w0.cols; }
  bool uses_m_row() const {
    return config.method == Method::dora_row || config.method == Method::bora;
  }
  bool uses_m_col() const {
    return config.method == Method::dora || config.method == Method::bora;
  }
};

// b = 0 so the initial update is zero; a is seeded uniform on +-1/sqrt(rank);
// magnitude vectors start as the matching norms of w0, which makes the
// merged weight equal w0 exactly at init.
AdaptedLinear init_adapter(Matrix w0, const AdapterConfig& config);

// Handles for one layer's nodes on a tape. unit_rows/unit_cols expose the
// normalized intermediates where the method produces them.
struct AdapterVars {
  Var w0, a, b;
  Var m_row, m_col;
  Var unit_rows, unit_cols;
  Var merged;
};

// Creates leaves from the layer's current values and builds the merged
// weight on the tape.
AdapterVars attach(Tape& tape, const AdaptedLinear& layer);
Var adapter_forward(Tape& tape, const AdapterVars& vars, Var x);

// Value-level conveniences; both run the same graph as attach().
Matrix merged_weight(const AdaptedLinear& layer);
Matrix adapter_forward(const AdaptedLinear& layer, const Matrix& x);
// Collapses the adapter into a plain weight matrix for inference.
Matrix merge_and_freeze(const AdaptedLinear& layer);

// Mutable views of the trainable buffers, ordered [a, b, m_row?, m_col?].
struct ParamRef {
  std::string name;
  std::vector<double>* data;
};
std::vector<ParamRef> trainable_params(AdaptedLinear& layer);
std::int64_t trainable_count(const AdaptedLinear& layer);

// Gradient-check problems whose objective is a loss of the layer's forward
// output on fixed data.
GradCheckProblem adapter_mse_problem(AdaptedLinear& layer, const Matrix& x,
                                     const Matrix& target);
GradCheckProblem adapter_ce_problem(AdaptedLinear& layer, const Matrix& x,
                                    std::vector<int> targets);

// Architecture description for parameter counting.
struct ArchMatrix {
  std::string label;
  int out = 0;
  int in = 0;
};
struct ArchSpec {
  std::string name;
  int n_layers = 0;
  std::int64_t base_param_total = 0;
  std::vector<ArchMatrix> matrices;
};

struct ParamCount {
  std::int64_t count = 0;
  double percent = 0.0;  // 100*count/(base+count), rounded half-up, 2 decimals
};

// Trainable parameters a method adds when adapting the listed target
// matrices in every layer: rank*(out+in) per matrix, plus the magnitude
// vector lengths the method uses.
ParamCount count_trainable(const ArchSpec& arch, Method method, int rank,
                           std::span<const std::string> targets);

}  // namespace bora
