#include "bora/tape.hpp"

#include <algorithm>
#include <cmath>

#include "bora/errors.hpp"

namespace bora {

namespace {

std::size_t cell(int i, int j, int cols) {
  return static_cast<std::size_t>(i) * cols + j;
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw ContractError("tape: handle does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

std::string Tape::describe(Var v) const {
  const Node& n = node(v);
  if (n.is_vec) return "vector[" + std::to_string(n.rows) + "]";
  return std::to_string(n.rows) + "x" + std::to_string(n.cols);
}

Var Tape::push(Node n) {
  n.grad.assign(n.value.size(), 0.0);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::record(std::function<void(Tape&, Adjoints&)> step) {
  steps_.push_back(std::move(step));
}

Var Tape::require_matrix(Var v, const char* op) const {
  if (node(v).is_vec)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + describe(v));
  return v;
}

Var Tape::require_vector(Var v, const char* op) const {
  if (!node(v).is_vec)
    throw ShapeError(std::string(op) + ": expected a vector, got " + describe(v));
  return v;
}

Var Tape::matrix(const Matrix& m, bool, std::string name) {
  Node n;
  n.rows = m.rows;
  n.cols = m.cols;
  n.value = m.data;
  n.name = std::move(name);
  return push(std::move(n));
}

Var Tape::vector(const Vector& v, bool, std::string name) {
  Node n;
  n.rows = v.len;
  n.cols = 1;
  n.is_vec = true;
  n.value = v.data;
  n.name = std::move(name);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols || na.is_vec != nb.is_vec)
    throw ShapeError("add: shapes disagree: " + describe(a) + " vs " + describe(b));
  Node out = na;
  out.name.clear();
  for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] += nb.value[i];
  Var y = push(std::move(out));
  record([a, b, y](Tape&, Adjoints& adj) {
    const auto& g = adj[y.id];
    for (std::size_t i = 0; i < g.size(); ++i) {
      adj[a.id][i] += g[i];
      adj[b.id][i] += g[i];
    }
  });
  return y;
}

Var Tape::sub(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols || na.is_vec != nb.is_vec)
    throw ShapeError("sub: shapes disagree: " + describe(a) + " vs " + describe(b));
  Node out = na;
  out.name.clear();
  for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] -= nb.value[i];
  Var y = push(std::move(out));
  record([a, b, y](Tape&, Adjoints& adj) {
    const auto& g = adj[y.id];
    for (std::size_t i = 0; i < g.size(); ++i) {
      adj[a.id][i] += g[i];
      adj[b.id][i] -= g[i];
    }
  });
  return y;
}

Var Tape::scale(Var a, double c) {
  Node out = node(a);
  out.name.clear();
  for (double& v : out.value) v *= c;
  Var y = push(std::move(out));
  record([a, y, c](Tape&, Adjoints& adj) {
    const auto& g = adj[y.id];
    for (std::size_t i = 0; i < g.size(); ++i) adj[a.id][i] += c * g[i];
  });
  return y;
}

Var Tape::transpose(Var a) {
  require_matrix(a, "transpose");
  const Node& na = node(a);
  // push() may reallocate nodes_, so copy dimensions out of the reference
  // before creating the output node.
  const int rows = na.rows, cols = na.cols;
  Node out;
  out.rows = na.cols;
  out.cols = na.rows;
  out.value.resize(na.value.size());
  for (int i = 0; i < na.rows; ++i)
    for (int j = 0; j < na.cols; ++j)
      out.value[cell(j, i, out.cols)] = na.value[cell(i, j, na.cols)];
  Var y = push(std::move(out));
  record([a, y, rows, cols](Tape&, Adjoints& adj) {
    const auto& g = adj[y.id];
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        adj[a.id][cell(i, j, cols)] += g[cell(j, i, rows)];
  });
  return y;
}

Var Tape::detach(Var a) {
  Node out = node(a);
  out.name.clear();
  return push(std::move(out));  // no step recorded: gradient stops here
}

Var Tape::sum(Var a) {
  const Node& na = node(a);
  Node out;
  out.rows = 1;
  out.cols = 1;
  double s = 0.0;
  for (double v : na.value) s += v;
  out.value = {s};
  Var y = push(std::move(out));
  record([a, y](Tape&, Adjoints& adj) {
    const double g = adj[y.id][0];
    for (double& v : adj[a.id]) v += g;
  });
  return y;
}

Var Tape::matmul(Var a, Var b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.cols != nb.rows)
    throw ShapeError("matmul: inner dimensions disagree: " + describe(a) +
                     " vs " + describe(b));
  const int m = na.rows, inner = na.cols, p = nb.cols;
  Node out;
  out.rows = na.rows;
  out.cols = nb.cols;
  out.value.assign(static_cast<std::size_t>(out.rows) * out.cols, 0.0);
  for (int i = 0; i < na.rows; ++i) {
    for (int k = 0; k < na.cols; ++k) {
      const double aik = na.value[cell(i, k, na.cols)];
      if (aik == 0.0) continue;
      for (int j = 0; j < nb.cols; ++j)
        out.value[cell(i, j, out.cols)] += aik * nb.value[cell(k, j, nb.cols)];
    }
  }
  Var y = push(std::move(out));
  record([a, b, y, m, inner, p](Tape& t, Adjoints& adj) {
    const auto& g = adj[y.id];
    const auto& av = t.nodes_[a.id].value;
    const auto& bv = t.nodes_[b.id].value;
    // dA[i,k] += sum_j g[i,j] * B[k,j]
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k < inner; ++k) {
        double s = 0.0;
        for (int j = 0; j < p; ++j)
          s += g[cell(i, j, p)] * bv[cell(k, j, p)];
        adj[a.id][cell(i, k, inner)] += s;
      }
    }
    // dB[k,j] += sum_i A[i,k] * g[i,j]
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k < inner; ++k) {
        const double aik = av[cell(i, k, inner)];
        if (aik == 0.0) continue;
        for (int j = 0; j < p; ++j)
          adj[b.id][cell(k, j, p)] += aik * g[cell(i, j, p)];
      }
    }
  });
  return y;
}

Var Tape::dim_norms(Var m, Dim d) {
  require_matrix(m, "dim_norms");
  const Node& nm = node(m);
  if (nm.value.empty()) throw ShapeError("dim_norms: matrix is empty");
  const int rows = nm.rows, cols = nm.cols;
  const int n = d == Dim::row ? rows : cols;
  Node out;
  out.rows = n;
  out.cols = 1;
  out.is_vec = true;
  out.value.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < nm.rows; ++i) {
    for (int j = 0; j < nm.cols; ++j) {
      const double v = nm.value[cell(i, j, nm.cols)];
      out.value[static_cast<std::size_t>(d == Dim::row ? i : j)] += v * v;
    }
  }
  for (double& v : out.value) v = std::sqrt(v);
  Var y = push(std::move(out));
  record([m, y, d, rows, cols](Tape& t, Adjoints& adj) {
    const auto& g = adj[y.id];
    const auto& mv = t.nodes_[m.id].value;
    const auto& norms = t.nodes_[y.id].value;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const int k = d == Dim::row ? i : j;
        const double n = norms[static_cast<std::size_t>(k)];
        if (n == 0.0) continue;  // zero vector: treat the derivative as zero
        adj[m.id][cell(i, j, cols)] +=
            g[static_cast<std::size_t>(k)] * mv[cell(i, j, cols)] / n;
      }
    }
  });
  return y;
}

Var Tape::scale_dim(Var m, Var v, Dim d) {
  require_matrix(m, "scale_dim");
  require_vector(v, "scale_dim");
  const Node& nm = node(m);
  const Node& nv = node(v);
  const int expect = d == Dim::row ? nm.rows : nm.cols;
  if (nv.rows != expect)
    throw ShapeError("scale_dim: " + std::string(to_string(d)) + " count of " +
                     describe(m) + " is " + std::to_string(expect) +
                     " but the vector has length " + std::to_string(nv.rows));
  const int rows = nm.rows, cols = nm.cols;
  Node out;
  out.rows = nm.rows;
  out.cols = nm.cols;
  out.value.resize(nm.value.size());
  for (int i = 0; i < nm.rows; ++i)
    for (int j = 0; j < nm.cols; ++j)
      out.value[cell(i, j, nm.cols)] =
          nm.value[cell(i, j, nm.cols)] *
          nv.value[static_cast<std::size_t>(d == Dim::row ? i : j)];
  Var y = push(std::move(out));
  record([m, v, y, d, rows, cols](Tape& t, Adjoints& adj) {
    const auto& g = adj[y.id];
    const auto& mv = t.nodes_[m.id].value;
    const auto& vv = t.nodes_[v.id].value;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const int k = d == Dim::row ? i : j;
        const std::size_t ij = cell(i, j, cols);
        adj[m.id][ij] += vv[static_cast<std::size_t>(k)] * g[ij];
        adj[v.id][static_cast<std::size_t>(k)] += mv[ij] * g[ij];
      }
    }
  });
  return y;
}

Var Tape::div_dim(Var m, Var v, Dim d, double floor, ZeroNormPolicy policy) {
  require_matrix(m, "div_dim");
  require_vector(v, "div_dim");
  if (!(floor > 0.0)) throw ContractError("div_dim: floor must be positive");
  const Node& nm = node(m);
  const Node& nv = node(v);
  const int expect = d == Dim::row ? nm.rows : nm.cols;
  if (nv.rows != expect)
    throw ShapeError("div_dim: " + std::string(to_string(d)) + " count of " +
                     describe(m) + " is " + std::to_string(expect) +
                     " but the vector has length " + std::to_string(nv.rows));
  if (policy == ZeroNormPolicy::strict) {
    for (int k = 0; k < nv.rows; ++k) {
      if (nv.value[static_cast<std::size_t>(k)] < floor)
        throw DegenerateNormError(
            "div_dim: " + std::string(to_string(d)) + " " + std::to_string(k) +
            " has norm " + std::to_string(nv.value[static_cast<std::size_t>(k)]) +
            " below floor " + std::to_string(floor));
    }
  }
  const int rows = nm.rows, cols = nm.cols;
  Node out;
  out.rows = nm.rows;
  out.cols = nm.cols;
  out.value.resize(nm.value.size());
  for (int i = 0; i < nm.rows; ++i)
    for (int j = 0; j < nm.cols; ++j) {
      const double den = std::max(
          nv.value[static_cast<std::size_t>(d == Dim::row ? i : j)], floor);
      out.value[cell(i, j, nm.cols)] = nm.value[cell(i, j, nm.cols)] / den;
    }
  Var y = push(std::move(out));
  record([m, v, y, d, floor, rows, cols](Tape& t, Adjoints& adj) {
    const auto& g = adj[y.id];
    const auto& vv = t.nodes_[v.id].value;
    const auto& yv = t.nodes_[y.id].value;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const int k = d == Dim::row ? i : j;
        const double raw = vv[static_cast<std::size_t>(k)];
        const double den = std::max(raw, floor);
        const std::size_t ij = cell(i, j, cols);
        adj[m.id][ij] += g[ij] / den;
        if (raw > floor)  // clamped entries are constant w.r.t. v
          adj[v.id][static_cast<std::size_t>(k)] -= g[ij] * yv[ij] / den;
      }
    }
  });
  return y;
}

Var Tape::mse_loss(Var pred, Var target) {
  const Node& np = node(pred);
  const Node& nt = node(target);
  if (np.rows != nt.rows || np.cols != nt.cols || np.is_vec != nt.is_vec)
    throw ShapeError("mse_loss: shapes disagree: " + describe(pred) + " vs " +
                     describe(target));
  Node out;
  out.rows = 1;
  out.cols = 1;
  double s = 0.0;
  for (std::size_t i = 0; i < np.value.size(); ++i) {
    const double d = np.value[i] - nt.value[i];
    s += d * d;
  }
  const double n = static_cast<double>(np.value.size());
  out.value = {s / n};
  Var y = push(std::move(out));
  record([pred, target, y, n](Tape& t, Adjoints& adj) {
    const double g = adj[y.id][0];
    const auto& pv = t.nodes_[pred.id].value;
    const auto& tv = t.nodes_[target.id].value;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double d = 2.0 * (pv[i] - tv[i]) / n * g;
      adj[pred.id][i] += d;
      adj[target.id][i] -= d;
    }
  });
  return y;
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const int> targets) {
  require_matrix(logits, "softmax_cross_entropy");
  const Node& nl = node(logits);
  if (static_cast<int>(targets.size()) != nl.rows)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(nl.rows) + " rows");
  for (int i = 0; i < nl.rows; ++i) {
    if (targets[static_cast<std::size_t>(i)] < 0 ||
        targets[static_cast<std::size_t>(i)] >= nl.cols)
      throw IndexError("softmax_cross_entropy: target " +
                       std::to_string(targets[static_cast<std::size_t>(i)]) +
                       " out of range [0, " + std::to_string(nl.cols) +
                       ") at row " + std::to_string(i));
  }
  const int rows = nl.rows, cols = nl.cols;
  Node out;
  out.rows = 1;
  out.cols = 1;
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    double mx = nl.value[cell(i, 0, cols)];
    for (int j = 1; j < cols; ++j)
      mx = std::max(mx, nl.value[cell(i, j, cols)]);
    double se = 0.0;
    for (int j = 0; j < cols; ++j)
      se += std::exp(nl.value[cell(i, j, cols)] - mx);
    const double lse = mx + std::log(se);
    total += lse - nl.value[cell(i, targets[static_cast<std::size_t>(i)], cols)];
  }
  out.value = {total / rows};
  Var y = push(std::move(out));
  std::vector<int> tcopy(targets.begin(), targets.end());
  record([logits, y, rows, cols, tcopy = std::move(tcopy)](Tape& t,
                                                           Adjoints& adj) {
    const double g = adj[y.id][0];
    const auto& lv = t.nodes_[logits.id].value;
    for (int i = 0; i < rows; ++i) {
      double mx = lv[cell(i, 0, cols)];
      for (int j = 1; j < cols; ++j) mx = std::max(mx, lv[cell(i, j, cols)]);
      double se = 0.0;
      for (int j = 0; j < cols; ++j) se += std::exp(lv[cell(i, j, cols)] - mx);
      for (int j = 0; j < cols; ++j) {
        const double p = std::exp(lv[cell(i, j, cols)] - mx) / se;
        const double ind = j == tcopy[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        adj[logits.id][cell(i, j, cols)] += g * (p - ind) / rows;
      }
    }
  });
  return y;
}

void Tape::backward(Var loss) {
  const Node& nl = node(loss);
  if (nl.rows * nl.cols != 1)
    throw ContractError("backward: loss must be scalar, got " + describe(loss));
  Adjoints adj(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    adj[i].assign(nodes_[i].value.size(), 0.0);
  adj[static_cast<std::size_t>(loss.id)][0] = 1.0;
  // Execution order is a topological order, so the reverse replay visits
  // each node only after all of its consumers.
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)(*this, adj);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& g = nodes_[i].grad;
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += adj[i][k];
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

double Tape::value_scalar(Var v) const {
  const Node& n = node(v);
  if (n.rows * n.cols != 1)
    throw ContractError("value_scalar: node is " + describe(v));
  return n.value[0];
}

Matrix Tape::value_matrix(Var v) const {
  const Node& n = node(v);
  return Matrix(n.rows, n.is_vec ? 1 : n.cols, n.value);
}

Vector Tape::value_vector(Var v) const {
  const Node& n = node(v);
  if (!n.is_vec) throw ContractError("value_vector: node is " + describe(v));
  return Vector(n.value);
}

Matrix Tape::grad_matrix(Var v) const {
  const Node& n = node(v);
  return Matrix(n.rows, n.is_vec ? 1 : n.cols, n.grad);
}

Vector Tape::grad_vector(Var v) const {
  const Node& n = node(v);
  if (!n.is_vec) throw ContractError("grad_vector: node is " + describe(v));
  return Vector(n.grad);
}

}  // namespace bora
