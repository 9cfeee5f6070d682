#include "elden/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "elden/kernels.hpp"

namespace elden::tc {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Matmul: return "matmul";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::SoftmaxRows: return "softmax";
    case Op::Log: return "log";
    case Op::ConcatCols: return "concat";
    case Op::SliceCols: return "slice";
    case Op::SumAll: return "sum";
    case Op::MeanAll: return "mean";
    case Op::Abs: return "abs";
    case Op::Exp: return "exp";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::AddRow: return "add_row";
    case Op::ClampMin: return "clamp_min";
    case Op::SumRows: return "sum_rows";
    case Op::SumCols: return "sum_cols";
    case Op::ExpandScalar: return "expand_scalar";
    case Op::ExpandCol: return "expand_col";
    case Op::ExpandRow: return "expand_row";
    case Op::Transpose: return "transpose";
    case Op::EmbedCols: return "embed_cols";
    case Op::BmmNT: return "bmm_nt";
    case Op::BmmNN: return "bmm_nn";
    case Op::BlockTr: return "block_tr";
    case Op::PackTokens: return "pack_tokens";
    case Op::UnpackToken: return "unpack_token";
    case Op::EmbedToken: return "embed_token";
    case Op::GatherCols: return "gather_cols";
    case Op::ScatterCols: return "scatter_cols";
  }
  return "?";
}

namespace {
[[noreturn]] void shape_error(Op op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " +
                              a.shape_str() + " and " + b.shape_str());
}
[[noreturn]] void shape_error1(Op op, const Tensor& a, const char* why) {
  throw std::invalid_argument(std::string(op_name(op)) + ": bad shape " + a.shape_str() +
                              " (" + why + ")");
}
}  // namespace

std::vector<double> Tape::alloc_data(std::size_t n) {
  auto it = pool_.find(n);
  if (it != pool_.end() && !it->second.empty()) {
    std::vector<double> buf = std::move(it->second.back());
    it->second.pop_back();
    return buf;
  }
  return std::vector<double>(n);
}

void Tape::reset() {
  for (Node& n : nodes_) {
    if (!n.value.data.empty()) pool_[n.value.data.size()].push_back(std::move(n.value.data));
  }
  nodes_.clear();
}

std::int32_t Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<std::int32_t>(nodes_.size()) - 1;
}

Val Tape::leaf(Tensor t, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.requires_grad = requires_grad;
  n.value = std::move(t);
  return {this, push(std::move(n))};
}

void Tape::compute(Node& n) const {
  auto& out = n.value;
  const Node* A = n.a >= 0 ? &nodes_[n.a] : nullptr;
  const Node* B = n.b >= 0 ? &nodes_[n.b] : nullptr;
  switch (n.op) {
    case Op::Leaf: return;
    case Op::Matmul: {
      const std::size_t m = out.rows(), nn = out.cols();
      const std::size_t k = n.f0 ? A->value.rows() : A->value.cols();
      kern::dgemm(n.f0, n.f1, m, nn, k, A->value.data.data(), A->value.cols(),
                  B->value.data.data(), B->value.cols(), out.data.data(), nn);
      return;
    }
    case Op::Add:
      for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = A->value.data[i] + B->value.data[i];
      return;
    case Op::Mul:
      for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = A->value.data[i] * B->value.data[i];
      return;
    case Op::Div:
      for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = A->value.data[i] / B->value.data[i];
      return;
    case Op::Relu:
      for (std::size_t i = 0; i < out.size(); ++i) {
        double v = A->value.data[i];
        out.data[i] = v > 0.0 ? v : 0.0;
      }
      return;
    case Op::Tanh:
      for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::tanh(A->value.data[i]);
      return;
    case Op::Abs:
      for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::fabs(A->value.data[i]);
      return;
    case Op::Log:
      for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::log(A->value.data[i]);
      return;
    case Op::Exp:
      for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::exp(A->value.data[i]);
      return;
    case Op::SoftmaxRows: {
      const std::size_t r = out.rows(), c = out.cols();
      for (std::size_t i = 0; i < r; ++i) {
        const double* x = A->value.data.data() + i * c;
        double* y = out.data.data() + i * c;
        double mx = x[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          y[j] = std::exp(x[j] - mx);
          s += y[j];
        }
        for (std::size_t j = 0; j < c; ++j) y[j] /= s;
      }
      return;
    }
    case Op::Scale:
      for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = A->value.data[i] * n.d0;
      return;
    case Op::AddScalar:
      for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = A->value.data[i] + n.d0;
      return;
    case Op::ClampMin:
      for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = std::max(A->value.data[i], n.d0);
      return;
    case Op::AddRow: {
      const std::size_t r = out.rows(), c = out.cols();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          out.data[i * c + j] = A->value.data[i * c + j] + B->value.data[j];
      return;
    }
    case Op::ConcatCols: {
      const std::size_t r = out.rows(), c = out.cols();
      std::size_t off = 0;
      for (auto id : n.more) {
        const Tensor& x = nodes_[id].value;
        const std::size_t w = x.cols();
        for (std::size_t i = 0; i < r; ++i)
          std::memcpy(out.data.data() + i * c + off, x.data.data() + i * w,
                      w * sizeof(double));
        off += w;
      }
      return;
    }
    case Op::SliceCols: {
      const std::size_t r = out.rows(), c = out.cols(), cin = A->value.cols();
      for (std::size_t i = 0; i < r; ++i)
        std::memcpy(out.data.data() + i * c, A->value.data.data() + i * cin + n.i0,
                    c * sizeof(double));
      return;
    }
    case Op::EmbedCols: {
      const std::size_t r = out.rows(), c = out.cols(), w = A->value.cols();
      std::memset(out.data.data(), 0, out.size() * sizeof(double));
      for (std::size_t i = 0; i < r; ++i)
        std::memcpy(out.data.data() + i * c + n.i0, A->value.data.data() + i * w,
                    w * sizeof(double));
      return;
    }
    case Op::SumAll: {
      double s = 0.0;
      for (double v : A->value.data) s += v;
      out.data[0] = s;
      return;
    }
    case Op::MeanAll: {
      double s = 0.0;
      for (double v : A->value.data) s += v;
      out.data[0] = s / static_cast<double>(A->value.size());
      return;
    }
    case Op::SumRows: {
      const std::size_t r = A->value.rows(), c = A->value.cols();
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        const double* x = A->value.data.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) s += x[j];
        out.data[i] = s;
      }
      return;
    }
    case Op::SumCols: {
      const std::size_t r = A->value.rows(), c = A->value.cols();
      std::memset(out.data.data(), 0, c * sizeof(double));
      for (std::size_t i = 0; i < r; ++i) {
        const double* x = A->value.data.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) out.data[j] += x[j];
      }
      return;
    }
    case Op::ExpandScalar: {
      const double v = A->value.data[0];
      std::fill(out.data.begin(), out.data.end(), v);
      return;
    }
    case Op::ExpandCol: {
      const std::size_t r = out.rows(), c = out.cols();
      for (std::size_t i = 0; i < r; ++i)
        std::fill(out.data.begin() + i * c, out.data.begin() + (i + 1) * c,
                  A->value.data[i]);
      return;
    }
    case Op::ExpandRow: {
      const std::size_t r = out.rows(), c = out.cols();
      for (std::size_t i = 0; i < r; ++i)
        std::memcpy(out.data.data() + i * c, A->value.data.data(), c * sizeof(double));
      return;
    }
    case Op::Transpose: {
      const std::size_t r = out.rows(), c = out.cols();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = A->value.at(j, i);
      return;
    }
    case Op::BmmNT: {
      const std::size_t pa = n.i0, pb = n.i1, S = A->value.rows() / pa;
      const std::size_t k = A->value.cols();
      kern::block_matmul_nt(S, pa, pb, k, A->value.data.data(), B->value.data.data(),
                            out.data.data());
      return;
    }
    case Op::BmmNN: {
      const std::size_t pa = n.i0, pb = n.i1, S = A->value.rows() / pa;
      const std::size_t k = B->value.cols();
      kern::block_matmul_nn(S, pa, pb, k, A->value.data.data(), B->value.data.data(),
                            out.data.data());
      return;
    }
    case Op::BlockTr: {
      const std::size_t p = n.i0, q = n.i1, S = A->value.rows() / p;
      for (std::size_t s = 0; s < S; ++s) {
        const double* x = A->value.data.data() + s * p * q;
        double* y = out.data.data() + s * p * q;
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = 0; j < q; ++j) y[j * p + i] = x[i * q + j];
      }
      return;
    }
    case Op::PackTokens: {
      const std::size_t T = n.more.size(), d = out.cols();
      const std::size_t Bn = out.rows() / T;
      for (std::size_t t = 0; t < T; ++t) {
        const Tensor& x = nodes_[n.more[t]].value;
        for (std::size_t b = 0; b < Bn; ++b)
          std::memcpy(out.data.data() + (b * T + t) * d, x.data.data() + b * d,
                      d * sizeof(double));
      }
      return;
    }
    case Op::UnpackToken: {
      const std::size_t t = n.i0, T = n.i1, d = out.cols(), Bn = out.rows();
      for (std::size_t b = 0; b < Bn; ++b)
        std::memcpy(out.data.data() + b * d, A->value.data.data() + (b * T + t) * d,
                    d * sizeof(double));
      return;
    }
    case Op::EmbedToken: {
      const std::size_t t = n.i0, T = n.i1, d = out.cols(), Bn = A->value.rows();
      std::memset(out.data.data(), 0, out.size() * sizeof(double));
      for (std::size_t b = 0; b < Bn; ++b)
        std::memcpy(out.data.data() + (b * T + t) * d, A->value.data.data() + b * d,
                    d * sizeof(double));
      return;
    }
    case Op::GatherCols: {
      const std::size_t r = out.rows(), c = A->value.cols();
      for (std::size_t i = 0; i < r; ++i) out.data[i] = A->value.data[i * c + (*n.idx)[i]];
      return;
    }
    case Op::ScatterCols: {
      const std::size_t r = out.rows(), c = out.cols();
      std::memset(out.data.data(), 0, out.size() * sizeof(double));
      for (std::size_t i = 0; i < r; ++i) out.data[i * c + (*n.idx)[i]] = A->value.data[i];
      return;
    }
  }
}

namespace {
struct Dims {
  std::size_t r, c;
};
}  // namespace

#define ELDEN_EMIT(node, rows, cols)                      \
  do {                                                    \
    (node).value.shape = {(std::size_t)(rows), (std::size_t)(cols)}; \
    (node).value.data = alloc_data((std::size_t)(rows) * (std::size_t)(cols)); \
    std::int32_t id_ = push(std::move(node));             \
    compute(nodes_[id_]);                                 \
    return {this, id_};                                   \
  } while (0)

Val Tape::matmul(Val a, Val b, bool ta, bool tb) {
  const Tensor& A = a.v();
  const Tensor& B = b.v();
  const std::size_t m = ta ? A.cols() : A.rows();
  const std::size_t k = ta ? A.rows() : A.cols();
  const std::size_t k2 = tb ? B.cols() : B.rows();
  const std::size_t n = tb ? B.rows() : B.cols();
  if (k != k2) shape_error(Op::Matmul, A, B);
  Node nd;
  nd.op = Op::Matmul;
  nd.a = a.id;
  nd.b = b.id;
  nd.f0 = ta;
  nd.f1 = tb;
  ELDEN_EMIT(nd, m, n);
}

Val Tape::add(Val a, Val b) {
  if (!a.v().same_shape(b.v())) shape_error(Op::Add, a.v(), b.v());
  Node nd;
  nd.op = Op::Add;
  nd.a = a.id;
  nd.b = b.id;
  ELDEN_EMIT(nd, a.v().rows(), a.v().cols());
}

Val Tape::mul(Val a, Val b) {
  if (!a.v().same_shape(b.v())) shape_error(Op::Mul, a.v(), b.v());
  Node nd;
  nd.op = Op::Mul;
  nd.a = a.id;
  nd.b = b.id;
  ELDEN_EMIT(nd, a.v().rows(), a.v().cols());
}

Val Tape::div(Val a, Val b) {
  if (!a.v().same_shape(b.v())) shape_error(Op::Div, a.v(), b.v());
  Node nd;
  nd.op = Op::Div;
  nd.a = a.id;
  nd.b = b.id;
  ELDEN_EMIT(nd, a.v().rows(), a.v().cols());
}

#define ELDEN_UNARY(fname, opk)                       \
  Val Tape::fname(Val x) {                            \
    Node nd;                                          \
    nd.op = opk;                                      \
    nd.a = x.id;                                      \
    ELDEN_EMIT(nd, x.v().rows(), x.v().cols());       \
  }

ELDEN_UNARY(relu, Op::Relu)
ELDEN_UNARY(tanh_, Op::Tanh)
ELDEN_UNARY(abs_, Op::Abs)
ELDEN_UNARY(log_, Op::Log)
ELDEN_UNARY(exp_, Op::Exp)
ELDEN_UNARY(softmax_rows, Op::SoftmaxRows)
#undef ELDEN_UNARY

Val Tape::concat_cols(std::span<const Val> xs) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  std::size_t r = xs[0].v().rows(), c = 0;
  for (const Val& x : xs) {
    if (x.v().rows() != r) shape_error(Op::ConcatCols, xs[0].v(), x.v());
    c += x.v().cols();
  }
  Node nd;
  nd.op = Op::ConcatCols;
  for (const Val& x : xs) nd.more.push_back(x.id);
  ELDEN_EMIT(nd, r, c);
}

Val Tape::slice_cols(Val x, std::int32_t c0, std::int32_t c1) {
  if (c0 < 0 || c1 <= c0 || (std::size_t)c1 > x.v().cols())
    shape_error1(Op::SliceCols, x.v(), "slice bounds out of range");
  Node nd;
  nd.op = Op::SliceCols;
  nd.a = x.id;
  nd.i0 = c0;
  nd.i1 = c1;
  ELDEN_EMIT(nd, x.v().rows(), c1 - c0);
}

Val Tape::embed_cols(Val x, std::int32_t c0, std::int32_t total_cols) {
  if (c0 < 0 || c0 + (std::int32_t)x.v().cols() > total_cols)
    shape_error1(Op::EmbedCols, x.v(), "embed bounds out of range");
  Node nd;
  nd.op = Op::EmbedCols;
  nd.a = x.id;
  nd.i0 = c0;
  nd.i1 = total_cols;
  ELDEN_EMIT(nd, x.v().rows(), total_cols);
}

Val Tape::sum_all(Val x) {
  Node nd;
  nd.op = Op::SumAll;
  nd.a = x.id;
  ELDEN_EMIT(nd, 1, 1);
}

Val Tape::mean_all(Val x) {
  Node nd;
  nd.op = Op::MeanAll;
  nd.a = x.id;
  ELDEN_EMIT(nd, 1, 1);
}

Val Tape::scale(Val x, double c) {
  Node nd;
  nd.op = Op::Scale;
  nd.a = x.id;
  nd.d0 = c;
  ELDEN_EMIT(nd, x.v().rows(), x.v().cols());
}

Val Tape::add_scalar(Val x, double c) {
  Node nd;
  nd.op = Op::AddScalar;
  nd.a = x.id;
  nd.d0 = c;
  ELDEN_EMIT(nd, x.v().rows(), x.v().cols());
}

Val Tape::clamp_min(Val x, double c) {
  Node nd;
  nd.op = Op::ClampMin;
  nd.a = x.id;
  nd.d0 = c;
  ELDEN_EMIT(nd, x.v().rows(), x.v().cols());
}

Val Tape::add_row(Val x, Val rowvec) {
  if (rowvec.v().rows() != 1 || rowvec.v().cols() != x.v().cols())
    shape_error(Op::AddRow, x.v(), rowvec.v());
  Node nd;
  nd.op = Op::AddRow;
  nd.a = x.id;
  nd.b = rowvec.id;
  ELDEN_EMIT(nd, x.v().rows(), x.v().cols());
}

Val Tape::sum_rows(Val x) {
  Node nd;
  nd.op = Op::SumRows;
  nd.a = x.id;
  ELDEN_EMIT(nd, x.v().rows(), 1);
}

Val Tape::sum_cols(Val x) {
  Node nd;
  nd.op = Op::SumCols;
  nd.a = x.id;
  ELDEN_EMIT(nd, 1, x.v().cols());
}

Val Tape::expand_scalar(Val x, std::int32_t rows, std::int32_t cols) {
  if (x.v().size() != 1) shape_error1(Op::ExpandScalar, x.v(), "expected 1x1");
  Node nd;
  nd.op = Op::ExpandScalar;
  nd.a = x.id;
  ELDEN_EMIT(nd, rows, cols);
}

Val Tape::expand_col(Val x, std::int32_t cols) {
  if (x.v().cols() != 1) shape_error1(Op::ExpandCol, x.v(), "expected m x 1");
  Node nd;
  nd.op = Op::ExpandCol;
  nd.a = x.id;
  ELDEN_EMIT(nd, x.v().rows(), cols);
}

Val Tape::expand_row(Val x, std::int32_t rows) {
  if (x.v().rows() != 1) shape_error1(Op::ExpandRow, x.v(), "expected 1 x n");
  Node nd;
  nd.op = Op::ExpandRow;
  nd.a = x.id;
  ELDEN_EMIT(nd, rows, x.v().cols());
}

Val Tape::transpose(Val x) {
  Node nd;
  nd.op = Op::Transpose;
  nd.a = x.id;
  ELDEN_EMIT(nd, x.v().cols(), x.v().rows());
}

Val Tape::bmm_nt(Val a, Val b, std::int32_t pa, std::int32_t pb) {
  const Tensor& A = a.v();
  const Tensor& B = b.v();
  if (pa <= 0 || pb <= 0 || A.rows() % pa || B.rows() % pb ||
      A.rows() / pa != B.rows() / pb || A.cols() != B.cols())
    shape_error(Op::BmmNT, A, B);
  Node nd;
  nd.op = Op::BmmNT;
  nd.a = a.id;
  nd.b = b.id;
  nd.i0 = pa;
  nd.i1 = pb;
  ELDEN_EMIT(nd, A.rows(), pb);
}

Val Tape::bmm_nn(Val a, Val b, std::int32_t pa, std::int32_t pb) {
  const Tensor& A = a.v();
  const Tensor& B = b.v();
  if (pa <= 0 || pb <= 0 || A.rows() % pa || B.rows() % pb ||
      A.rows() / pa != B.rows() / pb || A.cols() != (std::size_t)pb)
    shape_error(Op::BmmNN, A, B);
  Node nd;
  nd.op = Op::BmmNN;
  nd.a = a.id;
  nd.b = b.id;
  nd.i0 = pa;
  nd.i1 = pb;
  ELDEN_EMIT(nd, A.rows(), B.cols());
}

Val Tape::block_tr(Val x, std::int32_t p, std::int32_t q) {
  const Tensor& X = x.v();
  if (p <= 0 || q <= 0 || X.rows() % p || X.cols() != (std::size_t)q)
    shape_error1(Op::BlockTr, X, "rows not divisible by block");
  Node nd;
  nd.op = Op::BlockTr;
  nd.a = x.id;
  nd.i0 = p;
  nd.i1 = q;
  ELDEN_EMIT(nd, X.rows() / p * q, p);
}

Val Tape::pack_tokens(std::span<const Val> xs) {
  if (xs.empty()) throw std::invalid_argument("pack_tokens: no inputs");
  const std::size_t Bn = xs[0].v().rows(), d = xs[0].v().cols();
  for (const Val& x : xs)
    if (x.v().rows() != Bn || x.v().cols() != d) shape_error(Op::PackTokens, xs[0].v(), x.v());
  Node nd;
  nd.op = Op::PackTokens;
  for (const Val& x : xs) nd.more.push_back(x.id);
  ELDEN_EMIT(nd, Bn * xs.size(), d);
}

Val Tape::unpack_token(Val x, std::int32_t t, std::int32_t T) {
  if (T <= 0 || t < 0 || t >= T || x.v().rows() % T)
    shape_error1(Op::UnpackToken, x.v(), "token index out of range");
  Node nd;
  nd.op = Op::UnpackToken;
  nd.a = x.id;
  nd.i0 = t;
  nd.i1 = T;
  ELDEN_EMIT(nd, x.v().rows() / T, x.v().cols());
}

Val Tape::embed_token(Val x, std::int32_t t, std::int32_t T) {
  if (T <= 0 || t < 0 || t >= T) shape_error1(Op::EmbedToken, x.v(), "token index out of range");
  Node nd;
  nd.op = Op::EmbedToken;
  nd.a = x.id;
  nd.i0 = t;
  nd.i1 = T;
  ELDEN_EMIT(nd, x.v().rows() * T, x.v().cols());
}

Val Tape::gather_cols(Val x, std::shared_ptr<const std::vector<std::int32_t>> idx) {
  if (!idx || idx->size() != x.v().rows())
    shape_error1(Op::GatherCols, x.v(), "index length mismatch");
  Node nd;
  nd.op = Op::GatherCols;
  nd.a = x.id;
  nd.idx = std::move(idx);
  ELDEN_EMIT(nd, x.v().rows(), 1);
}

Val Tape::scatter_cols(Val x, std::shared_ptr<const std::vector<std::int32_t>> idx,
                       std::int32_t cols) {
  if (x.v().cols() != 1 || !idx || idx->size() != x.v().rows())
    shape_error1(Op::ScatterCols, x.v(), "expected m x 1 with matching index");
  Node nd;
  nd.op = Op::ScatterCols;
  nd.a = x.id;
  nd.i0 = cols;
  nd.idx = std::move(idx);
  ELDEN_EMIT(nd, x.v().rows(), cols);
}

#undef ELDEN_EMIT

void Tape::replay() {
  for (Node& n : nodes_)
    if (n.op != Op::Leaf) compute(n);
}

namespace {
// Constant mask leaves: gradients do not flow into these (relu/abs/clamp
// have zero second derivative almost everywhere).
Tensor mask_positive(const Tensor& x) {
  Tensor m = x;
  for (double& v : m.data) v = v > 0.0 ? 1.0 : 0.0;
  return m;
}
Tensor mask_sign(const Tensor& x) {
  Tensor m = x;
  for (double& v : m.data) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return m;
}
Tensor mask_above(const Tensor& x, double c) {
  Tensor m = x;
  for (double& v : m.data) v = v > c ? 1.0 : 0.0;
  return m;
}
}  // namespace

std::vector<std::int32_t> Tape::backward(Val output,
                                         std::span<const std::int32_t> targets) {
  if (output.tape != this || output.id < 0) throw std::invalid_argument("backward: bad output");
  if (output.v().size() != 1)
    throw std::invalid_argument(std::string("backward: output must be scalar, got ") +
                                output.v().shape_str());
  const std::int32_t L = size();

  // Reachability: does a target leaf feed this node?
  std::vector<std::uint8_t> reach(L, 0);
  for (auto t : targets)
    if (t >= 0 && t < L) reach[t] = 1;
  for (std::int32_t i = 0; i < L; ++i) {
    if (reach[i]) continue;
    const Node& n = nodes_[i];
    if ((n.a >= 0 && reach[n.a]) || (n.b >= 0 && reach[n.b])) {
      reach[i] = 1;
      continue;
    }
    for (auto m : n.more)
      if (reach[m]) {
        reach[i] = 1;
        break;
      }
  }

  std::vector<std::int32_t> adj(L, -1);
  if (!reach[output.id]) return adj;
  adj[output.id] = leaf(Tensor::scalar(1.0)).id;

  auto acc = [&](std::int32_t in, Val piece) {
    if (adj[in] < 0)
      adj[in] = piece.id;
    else
      adj[in] = add({this, adj[in]}, piece).id;
  };

  // Small view of a node: nodes_ may reallocate while adjoint ops are
  // emitted, so value tensors are always re-read through Val handles.
  struct NodeArgs {
    Op op;
    std::int32_t a, b, i0, i1;
    bool f0, f1;
    double d0;
    std::shared_ptr<const std::vector<std::int32_t>> idx;
    std::vector<std::int32_t> more;
  };

  for (std::int32_t id = L - 1; id >= 0; --id) {
    if (adj[id] < 0) continue;
    const Node& nr = nodes_[id];
    if (nr.op == Op::Leaf) continue;
    const NodeArgs n{nr.op, nr.a, nr.b, nr.i0, nr.i1, nr.f0, nr.f1, nr.d0, nr.idx, nr.more};
    Val g{this, adj[id]};
    Val me{this, id};
    Val a{this, n.a}, b{this, n.b};
    const bool ra = n.a >= 0 && reach[n.a];
    const bool rb = n.b >= 0 && reach[n.b];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Matmul: {
        if (!n.f0 && !n.f1) {
          if (ra) acc(n.a, matmul(g, b, false, true));
          if (rb) acc(n.b, matmul(a, g, true, false));
        } else if (n.f0 && !n.f1) {
          if (ra) acc(n.a, matmul(b, g, false, true));
          if (rb) acc(n.b, matmul(a, g, false, false));
        } else if (!n.f0 && n.f1) {
          if (ra) acc(n.a, matmul(g, b, false, false));
          if (rb) acc(n.b, matmul(g, a, true, false));
        } else {
          if (ra) acc(n.a, matmul(b, g, true, true));
          if (rb) acc(n.b, matmul(g, a, true, true));
        }
        break;
      }
      case Op::Add:
        if (ra) acc(n.a, g);
        if (rb) acc(n.b, g);
        break;
      case Op::Mul:
        if (ra) acc(n.a, mul(g, b));
        if (rb) acc(n.b, mul(g, a));
        break;
      case Op::Div:
        if (ra) acc(n.a, div(g, b));
        if (rb) acc(n.b, scale(mul(g, div(me, b)), -1.0));
        break;
      case Op::Relu:
        if (ra) acc(n.a, mul(g, constant(mask_positive(a.v()))));
        break;
      case Op::Tanh:
        if (ra) {
          Val q = mul(me, me);
          acc(n.a, mul(g, add_scalar(scale(q, -1.0), 1.0)));
        }
        break;
      case Op::Abs:
        if (ra) acc(n.a, mul(g, constant(mask_sign(a.v()))));
        break;
      case Op::ClampMin:
        if (ra) acc(n.a, mul(g, constant(mask_above(a.v(), n.d0))));
        break;
      case Op::Log:
        if (ra) acc(n.a, div(g, a));
        break;
      case Op::Exp:
        if (ra) acc(n.a, mul(g, me));
        break;
      case Op::SoftmaxRows:
        if (ra) {
          Val t1 = mul(g, me);
          Val t2 = sum_rows(t1);
          Val t3 = expand_col(t2, (std::int32_t)me.v().cols());
          Val t4 = add(g, scale(t3, -1.0));
          acc(n.a, mul(me, t4));
        }
        break;
      case Op::ConcatCols: {
        std::int32_t off = 0;
        for (auto in : n.more) {
          const std::int32_t w = (std::int32_t)nodes_[in].value.cols();
          if (reach[in]) acc(in, slice_cols(g, off, off + w));
          off += w;
        }
        break;
      }
      case Op::SliceCols:
        if (ra) acc(n.a, embed_cols(g, n.i0, (std::int32_t)a.v().cols()));
        break;
      case Op::EmbedCols:
        if (ra) acc(n.a, slice_cols(g, n.i0, n.i0 + (std::int32_t)a.v().cols()));
        break;
      case Op::SumAll:
        if (ra) acc(n.a, expand_scalar(g, (std::int32_t)a.v().rows(), (std::int32_t)a.v().cols()));
        break;
      case Op::MeanAll:
        if (ra)
          acc(n.a, scale(expand_scalar(g, (std::int32_t)a.v().rows(), (std::int32_t)a.v().cols()),
                         1.0 / (double)a.v().size()));
        break;
      case Op::Scale:
        if (ra) acc(n.a, scale(g, n.d0));
        break;
      case Op::AddScalar:
        if (ra) acc(n.a, g);
        break;
      case Op::AddRow:
        if (ra) acc(n.a, g);
        if (rb) acc(n.b, sum_cols(g));
        break;
      case Op::SumRows:
        if (ra) acc(n.a, expand_col(g, (std::int32_t)a.v().cols()));
        break;
      case Op::SumCols:
        if (ra) acc(n.a, expand_row(g, (std::int32_t)a.v().rows()));
        break;
      case Op::ExpandScalar:
        if (ra) acc(n.a, sum_all(g));
        break;
      case Op::ExpandCol:
        if (ra) acc(n.a, sum_rows(g));
        break;
      case Op::ExpandRow:
        if (ra) acc(n.a, sum_cols(g));
        break;
      case Op::Transpose:
        if (ra) acc(n.a, transpose(g));
        break;
      case Op::BmmNT:
        if (ra) acc(n.a, bmm_nn(g, b, n.i0, n.i1));
        if (rb) acc(n.b, bmm_nn(block_tr(g, n.i0, n.i1), a, n.i1, n.i0));
        break;
      case Op::BmmNN:
        if (ra) acc(n.a, bmm_nt(g, b, n.i0, n.i1));
        if (rb) acc(n.b, bmm_nn(block_tr(a, n.i0, n.i1), g, n.i1, n.i0));
        break;
      case Op::BlockTr:
        if (ra) acc(n.a, block_tr(g, n.i1, n.i0));
        break;
      case Op::PackTokens: {
        const std::int32_t T = (std::int32_t)n.more.size();
        for (std::int32_t t = 0; t < T; ++t)
          if (reach[n.more[t]]) acc(n.more[t], unpack_token(g, t, T));
        break;
      }
      case Op::UnpackToken:
        if (ra) acc(n.a, embed_token(g, n.i0, n.i1));
        break;
      case Op::EmbedToken:
        if (ra) acc(n.a, unpack_token(g, n.i0, n.i1));
        break;
      case Op::GatherCols:
        if (ra) acc(n.a, scatter_cols(g, n.idx, (std::int32_t)a.v().cols()));
        break;
      case Op::ScatterCols:
        if (ra) acc(n.a, gather_cols(g, n.idx));
        break;
    }
  }
  return adj;
}

std::vector<Tensor> Tape::gradients(Val output, std::span<const std::int32_t> targets) {
  auto adj = backward(output, targets);
  std::vector<Tensor> out;
  out.reserve(targets.size());
  for (auto t : targets) {
    if (t >= 0 && t < (std::int32_t)adj.size() && adj[t] >= 0)
      out.push_back(nodes_[adj[t]].value);
    else
      out.push_back(Tensor::zeros(nodes_[t].value.shape));
  }
  return out;
}

Val forward_op(Tape& t, const std::string& kind, std::span<const Val> in, std::int32_t c0,
               std::int32_t c1) {
  auto need = [&](std::size_t n) {
    if (in.size() != n)
      throw std::invalid_argument("forward_op " + kind + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(in.size()));
  };
  if (kind == "matmul") { need(2); return t.matmul(in[0], in[1]); }
  if (kind == "add") { need(2); return t.add(in[0], in[1]); }
  if (kind == "mul") { need(2); return t.mul(in[0], in[1]); }
  if (kind == "relu") { need(1); return t.relu(in[0]); }
  if (kind == "tanh") { need(1); return t.tanh_(in[0]); }
  if (kind == "softmax") { need(1); return t.softmax_rows(in[0]); }
  if (kind == "log") { need(1); return t.log_(in[0]); }
  if (kind == "concat") { return t.concat_cols(in); }
  if (kind == "slice") { need(1); return t.slice_cols(in[0], c0, c1); }
  if (kind == "sum") { need(1); return t.sum_all(in[0]); }
  if (kind == "mean") { need(1); return t.mean_all(in[0]); }
  if (kind == "abs") { need(1); return t.abs_(in[0]); }
  throw std::invalid_argument("forward_op: unknown kind '" + kind + "'");
}

JacobianResult input_jacobian(Tape& t, std::span<const Val> inputs,
                              std::span<const Val> scalar_outputs) {
  std::size_t total = 0;
  std::vector<std::int32_t> targets;
  for (const Val& x : inputs) {
    total += x.v().size();
    targets.push_back(x.id);
  }
  JacobianResult r;
  r.jac = Tensor::zeros({total, scalar_outputs.size()});
  for (std::size_t j = 0; j < scalar_outputs.size(); ++j) {
    auto grads = t.gradients(scalar_outputs[j], targets);
    std::size_t d = 0;
    for (const Tensor& g : grads)
      for (double v : g.data) {
        if (!std::isfinite(v)) r.finite = false;
        r.jac.at(d++, j) = v;
      }
  }
  if (!r.finite) t.incidents.nonfinite_jacobians++;
  return r;
}

}  // namespace elden::tc
