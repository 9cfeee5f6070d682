#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "elden/tensor.hpp"

namespace elden::tc {

// Node kinds. The first twelve (Matmul..Abs) are the public forward_op
// surface; the rest are internal ops the backward rules are expressed in,
// so that a recorded backward pass is itself differentiable.
enum class Op : std::uint8_t {
  Leaf,
  Matmul,      // optional transpose flags f0 (lhs), f1 (rhs)
  Add,         // same shape
  Mul,         // elementwise
  Relu,
  Tanh,
  SoftmaxRows,
  Log,
  ConcatCols,  // variadic
  SliceCols,   // [i0, i1)
  SumAll,      // -> 1x1
  MeanAll,     // -> 1x1
  Abs,
  // internal
  Exp,
  Div,
  Scale,       // x * d0
  AddScalar,   // x + d0
  AddRow,      // (m x n) + broadcast (1 x n)
  ClampMin,    // max(x, d0), subgradient 0 on the clamped side
  SumRows,     // (m x n) -> (m x 1)
  SumCols,     // (m x n) -> (1 x n)
  ExpandScalar,  // 1x1 -> (i0 x i1)
  ExpandCol,     // (m x 1) -> (m x i0)
  ExpandRow,     // (1 x n) -> (i0 x n)
  Transpose,
  EmbedCols,   // place (m x w) into zeros (m x i1) at column i0
  BmmNT,       // per-sample blocks: (pa x k)(pb x k)^T, i0=pa, i1=pb
  BmmNN,       // per-sample blocks: (pa x pb)(pb x k),  i0=pa, i1=pb
  BlockTr,     // per-sample transpose (p x q) -> (q x p), i0=p, i1=q
  PackTokens,  // T matrices (B x d) -> (B*T x d), row b*T+t
  UnpackToken, // (B*T x d) -> (B x d) for token i0 of i1
  EmbedToken,  // (B x d) -> zeros (B*i1 x d) with token i0 filled
  GatherCols,  // out[r,0] = x[r, idx[r]]
  ScatterCols, // (m x 1) -> (m x i0) zeros with value at idx[r]
};

const char* op_name(Op op);

struct Node {
  Op op = Op::Leaf;
  std::int32_t a = -1, b = -1;        // primary inputs
  std::vector<std::int32_t> more;     // variadic tail (ConcatCols, PackTokens)
  std::int32_t i0 = 0, i1 = 0;
  bool f0 = false, f1 = false;
  double d0 = 0.0;
  std::shared_ptr<const std::vector<std::int32_t>> idx;  // GatherCols/ScatterCols
  bool requires_grad = false;         // leaves only: eligible as a grad target
  Tensor value;
};

class Tape;

// Cheap handle to a tape node.
struct Val {
  Tape* tape = nullptr;
  std::int32_t id = -1;
  const Tensor& v() const;
  bool ok() const { return tape && id >= 0; }
};

// Incident counters surfaced in run logs.
struct Incidents {
  std::uint64_t prob_clamps = 0;
  std::uint64_t nonfinite_jacobians = 0;
  std::uint64_t skipped_adam_steps = 0;
  std::uint64_t skipped_train_steps = 0;
  void merge(const Incidents& o) {
    prob_clamps += o.prob_clamps;
    nonfinite_jacobians += o.nonfinite_jacobians;
    skipped_adam_steps += o.skipped_adam_steps;
    skipped_train_steps += o.skipped_train_steps;
  }
};

class Tape {
 public:
  Incidents incidents;

  std::int32_t size() const { return static_cast<std::int32_t>(nodes_.size()); }
  const Node& node(std::int32_t id) const { return nodes_[id]; }
  Node& node(std::int32_t id) { return nodes_[id]; }

  // Drops all nodes but keeps their data buffers for reuse; graph shapes
  // repeat across training steps so this makes steady state allocation-free.
  void reset();

  Val leaf(Tensor t, bool requires_grad = false);
  Val constant(Tensor t) { return leaf(std::move(t), false); }
  Val scalar(double v) { return leaf(Tensor::scalar(v), false); }

  // Recomputes every node value from the leaves in order. Used by tests to
  // check replay determinism.
  void replay();

  // Reverse pass from a 1x1 output. Adjoint computation is emitted as tape
  // ops, so the result is differentiable again (reverse-over-reverse).
  // Only nodes from which a node in `targets` is reachable participate.
  // Returns adjoint node ids (-1 where no gradient flows), indexed by node
  // id at call time.
  std::vector<std::int32_t> backward(Val output, std::span<const std::int32_t> targets);

  // Gradient of `output` w.r.t. each target leaf; zero tensor where the
  // target does not influence the output.
  std::vector<Tensor> gradients(Val output, std::span<const std::int32_t> targets);

  std::vector<double> alloc_data(std::size_t n);

 private:
  friend struct Val;
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::vector<std::vector<double>>> pool_;

  std::int32_t push(Node n);
  void compute(Node& n) const;

 public:
  // -- op emitters ---------------------------------------------------------
  Val matmul(Val a, Val b, bool ta = false, bool tb = false);
  Val add(Val a, Val b);
  Val mul(Val a, Val b);
  Val div(Val a, Val b);
  Val relu(Val x);
  Val tanh_(Val x);
  Val softmax_rows(Val x);
  Val log_(Val x);
  Val exp_(Val x);
  Val abs_(Val x);
  Val concat_cols(std::span<const Val> xs);
  Val slice_cols(Val x, std::int32_t c0, std::int32_t c1);
  Val sum_all(Val x);
  Val mean_all(Val x);
  Val scale(Val x, double c);
  Val add_scalar(Val x, double c);
  Val add_row(Val x, Val rowvec);
  Val clamp_min(Val x, double c);
  Val sum_rows(Val x);
  Val sum_cols(Val x);
  Val expand_scalar(Val x, std::int32_t rows, std::int32_t cols);
  Val expand_col(Val x, std::int32_t cols);
  Val expand_row(Val x, std::int32_t rows);
  Val transpose(Val x);
  Val embed_cols(Val x, std::int32_t c0, std::int32_t total_cols);
  Val bmm_nt(Val a, Val b, std::int32_t pa, std::int32_t pb);
  Val bmm_nn(Val a, Val b, std::int32_t pa, std::int32_t pb);
  Val block_tr(Val x, std::int32_t p, std::int32_t q);
  Val pack_tokens(std::span<const Val> xs);
  Val unpack_token(Val x, std::int32_t t, std::int32_t T);
  Val embed_token(Val x, std::int32_t t, std::int32_t T);
  Val gather_cols(Val x, std::shared_ptr<const std::vector<std::int32_t>> idx);
  Val scatter_cols(Val x, std::shared_ptr<const std::vector<std::int32_t>> idx,
                   std::int32_t cols);
};

inline const Tensor& Val::v() const { return tape->node(id).value; }

// Public generic surface: the twelve documented op kinds, dispatched by
// name. Shape problems are rejected with a diagnostic naming the op and the
// offending shapes. `slice` takes bounds via c0/c1.
Val forward_op(Tape& t, const std::string& kind, std::span<const Val> inputs,
               std::int32_t c0 = 0, std::int32_t c1 = 0);

// Jacobian of scalar outputs w.r.t. flattened input leaves: entry (d, j) =
// d outputs[j] / d input-dim d. Inputs are concatenated in the given order.
// finite=false flags a transition whose jacobian contains non-finite values.
struct JacobianResult {
  Tensor jac;  // (total input dims) x (num outputs)
  bool finite = true;
};
JacobianResult input_jacobian(Tape& t, std::span<const Val> inputs,
                              std::span<const Val> scalar_outputs);

}  // namespace elden::tc
