#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bora/matrix.hpp"

namespace bora {

// What to do when a denominator norm falls below the floor: refuse, or clamp
// the denominator to the floor and continue.
enum class ZeroNormPolicy { strict, clamp };

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Records a forward computation and replays it in reverse to accumulate
// adjoints. Build one tape per forward pass. Node values are immutable once
// created; only the gradient accumulators change, and they belong to this
// tape. A tape is single-threaded, but distinct tapes share no state and may
// live on distinct threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ----- leaves -----
  Var matrix(const Matrix& m, bool trainable = false, std::string name = {});
  Var vector(const Vector& v, bool trainable = false, std::string name = {});

  // ----- elementwise / structural ops -----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  Var transpose(Var a);
  // Identity forward; blocks gradient flow into `a`.
  Var detach(Var a);
  Var sum(Var a);

  // C[i,j] = sum_k A[i,k] * B[k,j].
  Var matmul(Var a, Var b);

  // Euclidean norm of each row (length rows) or column (length cols).
  // Zero vectors yield zero norms; downstream consumers police them.
  Var dim_norms(Var m, Dim d);

  // Multiplies row i (or column j) of m by v[i] (or v[j]).
  Var scale_dim(Var m, Var v, Dim d);

  // Divides row i (or column j) of m by max(v[i], floor). In strict mode any
  // v[i] < floor raises DegenerateNormError. Differentiable through v where
  // v[i] > floor; the clamped branch contributes no v-gradient.
  Var div_dim(Var m, Var v, Dim d, double floor,
              ZeroNormPolicy policy = ZeroNormPolicy::strict);

  // Mean squared difference over all entries; shapes must match.
  Var mse_loss(Var pred, Var target);

  // Mean over rows of (logsumexp(row) - row[target]); stabilized by
  // max-subtraction. targets.size() must equal the number of rows and every
  // index must lie in [0, cols).
  Var softmax_cross_entropy(Var logits, std::span<const int> targets);

  // Accumulates d(loss)/d(node) into every node's grad. loss must be scalar.
  // Repeated calls without zero_grad() keep accumulating.
  void backward(Var loss);
  void zero_grad();

  // ----- accessors -----
  int rows(Var v) const { return node(v).rows; }
  int cols(Var v) const { return node(v).cols; }
  std::span<const double> value(Var v) const { return node(v).value; }
  std::span<const double> grad(Var v) const { return node(v).grad; }
  double value_scalar(Var v) const;
  Matrix value_matrix(Var v) const;
  Vector value_vector(Var v) const;
  Matrix grad_matrix(Var v) const;
  Vector grad_vector(Var v) const;

 private:
  struct Node {
    int rows = 0;
    int cols = 0;
    bool is_vec = false;
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;
  };
  // Scratch adjoint buffers used during one backward() replay, indexed by
  // node id.
  using Adjoints = std::vector<std::vector<double>>;

  const Node& node(Var v) const;
  Var push(Node n);
  void record(std::function<void(Tape&, Adjoints&)> step);
  Var require_matrix(Var v, const char* op) const;
  Var require_vector(Var v, const char* op) const;
  std::string describe(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::function<void(Tape&, Adjoints&)>> steps_;
};

}  // namespace bora
