#include "exin/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <utility>
#include <vector>

namespace exin {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;
using MapA = Eigen::Map<Eigen::ArrayXd>;
using CMapA = Eigen::Map<const Eigen::ArrayXd>;

constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

// How the rhs of an elementwise binary op maps onto the lhs.
struct Bcast {
  enum Kind { kEqual, kScalar, kSuffix, kRowScale, kGeneric };
  Kind kind = kEqual;
  int64_t n = 0;              // lhs size
  int64_t outer = 1, inner = 1;  // kSuffix: lhs = outer blocks of rhs
  int64_t rows = 1, cols = 1;    // kRowScale: rhs is one scalar per lhs row
  std::vector<int64_t> dims;     // kGeneric odometer over lhs dims
  std::vector<int64_t> bstr;     // rhs stride per lhs axis (0 = broadcast)
};

Bcast plan_bcast(const Shape& a, const Shape& b, const char* op) {
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  if (rb > ra)
    throw ShapeError(std::string(op) + ": rhs rank " + std::to_string(rb) +
                     " exceeds lhs rank " + std::to_string(ra));
  for (int i = 0; i < rb; ++i) {
    int64_t bd = b[static_cast<size_t>(rb - 1 - i)], ad = a[static_cast<size_t>(ra - 1 - i)];
    if (bd != ad && bd != 1)
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) + " to " +
                       shape_str(a));
  }
  Bcast p;
  p.n = shape_size(a);
  if (ra == rb && a == b) {
    p.kind = Bcast::kEqual;
    return p;
  }
  if (shape_size(b) == 1) {
    p.kind = Bcast::kScalar;
    return p;
  }
  bool suffix = true;
  for (int i = 0; i < rb; ++i)
    if (b[static_cast<size_t>(rb - 1 - i)] != a[static_cast<size_t>(ra - 1 - i)]) {
      suffix = false;
      break;
    }
  if (suffix) {
    p.kind = Bcast::kSuffix;
    p.inner = shape_size(b);
    p.outer = p.n / p.inner;
    return p;
  }
  if (ra == rb && b[static_cast<size_t>(rb - 1)] == 1) {
    bool rs = true;
    for (int i = 0; i + 1 < ra; ++i)
      if (a[static_cast<size_t>(i)] != b[static_cast<size_t>(i)]) {
        rs = false;
        break;
      }
    if (rs) {
      p.kind = Bcast::kRowScale;
      p.cols = a[static_cast<size_t>(ra - 1)];
      p.rows = p.n / p.cols;
      return p;
    }
  }
  p.kind = Bcast::kGeneric;
  p.dims = a;
  p.bstr.assign(static_cast<size_t>(ra), 0);
  int64_t stride = 1;
  for (int i = rb - 1; i >= 0; --i) {
    p.bstr[static_cast<size_t>(ra - rb + i)] = (b[static_cast<size_t>(i)] == 1) ? 0 : stride;
    stride *= b[static_cast<size_t>(i)];
  }
  return p;
}

// visit (lhs index, rhs index) pairs for a kGeneric plan
template <class F>
void generic_each(const Bcast& p, F&& f) {
  const int r = static_cast<int>(p.dims.size());
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  int64_t bi = 0;
  for (int64_t ai = 0; ai < p.n; ++ai) {
    f(ai, bi);
    for (int d = r - 1; d >= 0; --d) {
      ++idx[static_cast<size_t>(d)];
      bi += p.bstr[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < p.dims[static_cast<size_t>(d)]) break;
      idx[static_cast<size_t>(d)] = 0;
      bi -= p.bstr[static_cast<size_t>(d)] * p.dims[static_cast<size_t>(d)];
    }
  }
}

enum class Bin { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, Bin mode, const char* name) {
  if (!a.defined() || !b.defined()) throw ContractError(std::string(name) + ": undefined input");
  const Bcast p = plan_bcast(a.shape(), b.shape(), name);
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  switch (p.kind) {
    case Bcast::kEqual: {
      CMapA A(pa, p.n), B(pb, p.n);
      MapA O(po, p.n);
      if (mode == Bin::Add) O = A + B;
      else if (mode == Bin::Sub) O = A - B;
      else O = A * B;
      break;
    }
    case Bcast::kScalar: {
      const double s = pb[0];
      CMapA A(pa, p.n);
      MapA O(po, p.n);
      if (mode == Bin::Add) O = A + s;
      else if (mode == Bin::Sub) O = A - s;
      else O = A * s;
      break;
    }
    case Bcast::kSuffix: {
      CMapA B(pb, p.inner);
      for (int64_t o = 0; o < p.outer; ++o) {
        CMapA A(pa + o * p.inner, p.inner);
        MapA O(po + o * p.inner, p.inner);
        if (mode == Bin::Add) O = A + B;
        else if (mode == Bin::Sub) O = A - B;
        else O = A * B;
      }
      break;
    }
    case Bcast::kRowScale: {
      for (int64_t r = 0; r < p.rows; ++r) {
        const double s = pb[r];
        CMapA A(pa + r * p.cols, p.cols);
        MapA O(po + r * p.cols, p.cols);
        if (mode == Bin::Add) O = A + s;
        else if (mode == Bin::Sub) O = A - s;
        else O = A * s;
      }
      break;
    }
    case Bcast::kGeneric: {
      if (mode == Bin::Add)
        generic_each(p, [&](int64_t ai, int64_t bi) { po[ai] = pa[ai] + pb[bi]; });
      else if (mode == Bin::Sub)
        generic_each(p, [&](int64_t ai, int64_t bi) { po[ai] = pa[ai] - pb[bi]; });
      else
        generic_each(p, [&](int64_t ai, int64_t bi) { po[ai] = pa[ai] * pb[bi]; });
      break;
    }
  }
  check_finite(out, name);
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int na = tp->node_of(a), nb = tp->node_of(b);
  if (na < 0 && nb < 0) return out;
  tp->record(out, [p, mode, na, nb, av = a, bv = b](Tape& t, const double* g) {
    if (na >= 0) {
      double* ga = t.grad_buf(na);
      if (mode != Bin::Mul) {
        MapA(ga, p.n) += CMapA(g, p.n);
      } else {
        const double* pb2 = bv.data();
        switch (p.kind) {
          case Bcast::kEqual:
            MapA(ga, p.n) += CMapA(g, p.n) * CMapA(pb2, p.n);
            break;
          case Bcast::kScalar:
            MapA(ga, p.n) += CMapA(g, p.n) * pb2[0];
            break;
          case Bcast::kSuffix:
            for (int64_t o = 0; o < p.outer; ++o)
              MapA(ga + o * p.inner, p.inner) +=
                  CMapA(g + o * p.inner, p.inner) * CMapA(pb2, p.inner);
            break;
          case Bcast::kRowScale:
            for (int64_t r = 0; r < p.rows; ++r)
              MapA(ga + r * p.cols, p.cols) += CMapA(g + r * p.cols, p.cols) * pb2[r];
            break;
          case Bcast::kGeneric:
            generic_each(p, [&](int64_t ai, int64_t bi) { ga[ai] += g[ai] * pb2[bi]; });
            break;
        }
      }
    }
    if (nb >= 0) {
      double* gb = t.grad_buf(nb);
      const double sgn = (mode == Bin::Sub) ? -1.0 : 1.0;
      const double* pa2 = av.data();
      if (mode != Bin::Mul) {
        switch (p.kind) {
          case Bcast::kEqual:
            MapA(gb, p.n) += sgn * CMapA(g, p.n);
            break;
          case Bcast::kScalar:
            gb[0] += sgn * CMapA(g, p.n).sum();
            break;
          case Bcast::kSuffix:
            for (int64_t o = 0; o < p.outer; ++o)
              MapA(gb, p.inner) += sgn * CMapA(g + o * p.inner, p.inner);
            break;
          case Bcast::kRowScale:
            for (int64_t r = 0; r < p.rows; ++r) gb[r] += sgn * CMapA(g + r * p.cols, p.cols).sum();
            break;
          case Bcast::kGeneric:
            generic_each(p, [&](int64_t ai, int64_t bi) { gb[bi] += sgn * g[ai]; });
            break;
        }
      } else {
        switch (p.kind) {
          case Bcast::kEqual:
            MapA(gb, p.n) += CMapA(g, p.n) * CMapA(pa2, p.n);
            break;
          case Bcast::kScalar:
            gb[0] += (CMapA(g, p.n) * CMapA(pa2, p.n)).sum();
            break;
          case Bcast::kSuffix:
            for (int64_t o = 0; o < p.outer; ++o)
              MapA(gb, p.inner) += CMapA(g + o * p.inner, p.inner) * CMapA(pa2 + o * p.inner, p.inner);
            break;
          case Bcast::kRowScale:
            for (int64_t r = 0; r < p.rows; ++r)
              gb[r] += (CMapA(g + r * p.cols, p.cols) * CMapA(pa2 + r * p.cols, p.cols)).sum();
            break;
          case Bcast::kGeneric:
            generic_each(p, [&](int64_t ai, int64_t bi) { gb[bi] += g[ai] * pa2[ai]; });
            break;
        }
      }
    }
  });
  return out;
}

// shared machinery for elementwise unary ops: dy/dx computed from saved
// input x and saved output y
template <class Fwd, class Dfn>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Dfn dfn) {
  if (!x.defined()) throw ContractError(std::string(name) + ": undefined input");
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  check_finite(out, name);
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int nx = tp->node_of(x);
  if (nx < 0) return out;
  tp->record(out, [nx, n, xv = x, yv = out, dfn](Tape& t, const double* g) {
    double* gx = t.grad_buf(nx);
    const double* px2 = xv.data();
    const double* py2 = yv.data();
    for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * dfn(px2[i], py2[i]);
  });
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined()) throw ContractError("matmul: undefined input");
  if (a.rank() < 2 || b.rank() != 2)
    throw ShapeError("matmul: need lhs rank>=2 and rhs rank 2, got " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  const int64_t K = a.dim(-1), P = b.dim(1);
  if (b.dim(0) != K)
    throw ShapeError("matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int64_t R = a.size() / K;
  Shape os = a.shape();
  os.back() = P;
  Tensor out(os);
  MapM(out.data(), R, P).noalias() = CMapM(a.data(), R, K) * CMapM(b.data(), K, P);
  check_finite(out, "matmul");
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int na = tp->node_of(a), nb = tp->node_of(b);
  if (na < 0 && nb < 0) return out;
  tp->record(out, [na, nb, R, K, P, av = a, bv = b](Tape& t, const double* g) {
    CMapM G(g, R, P);
    if (na >= 0) MapM(t.grad_buf(na), R, K).noalias() += G * CMapM(bv.data(), K, P).transpose();
    if (nb >= 0) MapM(t.grad_buf(nb), K, P).noalias() += CMapM(av.data(), R, K).transpose() * G;
  });
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (!a.defined() || !b.defined()) throw ContractError("bmm: undefined input");
  if (a.rank() != 3 || b.rank() != 3)
    throw ShapeError("bmm: need rank-3 inputs, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2);
  const int64_t bK = transpose_b ? b.dim(2) : b.dim(1);
  const int64_t P = transpose_b ? b.dim(1) : b.dim(2);
  if (b.dim(0) != B || bK != K)
    throw ShapeError("bmm: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                     (transpose_b ? " (transpose_b)" : ""));
  Tensor out({B, M, P});
  for (int64_t i = 0; i < B; ++i) {
    CMapM A(a.data() + i * M * K, M, K);
    MapM O(out.data() + i * M * P, M, P);
    if (transpose_b)
      O.noalias() = A * CMapM(b.data() + i * P * K, P, K).transpose();
    else
      O.noalias() = A * CMapM(b.data() + i * K * P, K, P);
  }
  check_finite(out, "bmm");
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int na = tp->node_of(a), nb = tp->node_of(b);
  if (na < 0 && nb < 0) return out;
  tp->record(out, [na, nb, B, M, K, P, transpose_b, av = a, bv = b](Tape& t, const double* g) {
    for (int64_t i = 0; i < B; ++i) {
      CMapM G(g + i * M * P, M, P);
      if (!transpose_b) {
        CMapM A(av.data() + i * M * K, M, K);
        CMapM Bm(bv.data() + i * K * P, K, P);
        if (na >= 0) MapM(t.grad_buf(na) + i * M * K, M, K).noalias() += G * Bm.transpose();
        if (nb >= 0) MapM(t.grad_buf(nb) + i * K * P, K, P).noalias() += A.transpose() * G;
      } else {
        CMapM A(av.data() + i * M * K, M, K);
        CMapM Bm(bv.data() + i * P * K, P, K);
        if (na >= 0) MapM(t.grad_buf(na) + i * M * K, M, K).noalias() += G * Bm;
        if (nb >= 0) MapM(t.grad_buf(nb) + i * P * K, P, K).noalias() += G.transpose() * A;
      }
    }
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Mul, "mul"); }

Tensor affine(const Tensor& x, double mul_by, double add_c) {
  if (!x.defined()) throw ContractError("affine: undefined input");
  Tensor out(x.shape());
  const int64_t n = x.size();
  MapA(out.data(), n) = CMapA(x.data(), n) * mul_by + add_c;
  check_finite(out, "affine");
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int nx = tp->node_of(x);
  if (nx < 0) return out;
  tp->record(out, [nx, n, mul_by](Tape& t, const double* g) {
    MapA(t.grad_buf(nx), n) += CMapA(g, n) * mul_by;
  });
  return out;
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        return cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor softmax_rows(const Tensor& x) {
  if (!x.defined() || x.rank() < 1) throw ShapeError("softmax_rows: need rank >= 1");
  const int64_t D = x.dim(-1), R = x.size() / D;
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (int64_t r = 0; r < R; ++r) {
    const double* row = px + r * D;
    double* orow = po + r * D;
    double mx = row[0];
    for (int64_t j = 1; j < D; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int64_t j = 0; j < D; ++j) {
      orow[j] = std::exp(row[j] - mx);
      s += orow[j];
    }
    const double inv = 1.0 / s;
    for (int64_t j = 0; j < D; ++j) orow[j] *= inv;
  }
  check_finite(out, "softmax_rows");
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int nx = tp->node_of(x);
  if (nx < 0) return out;
  tp->record(out, [nx, R, D, yv = out](Tape& t, const double* g) {
    double* gx = t.grad_buf(nx);
    const double* py = yv.data();
    for (int64_t r = 0; r < R; ++r) {
      const double* yr = py + r * D;
      const double* gr = g + r * D;
      double dot = 0.0;
      for (int64_t j = 0; j < D; ++j) dot += gr[j] * yr[j];
      double* gxr = gx + r * D;
      for (int64_t j = 0; j < D; ++j) gxr[j] += yr[j] * (gr[j] - dot);
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!x.defined() || x.rank() < 1) throw ShapeError("layer_norm: need rank >= 1 input");
  const int64_t D = x.dim(-1), R = x.size() / D;
  if (gain.rank() != 1 || gain.dim(0) != D || bias.rank() != 1 || bias.dim(0) != D)
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(D) + "], got " +
                     shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  Tensor out(x.shape());
  // saved for backward
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(x.size()));
  auto invstd = std::make_shared<std::vector<double>>(static_cast<size_t>(R));
  const double* px = x.data();
  const double* pg = gain.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (int64_t r = 0; r < R; ++r) {
    const double* row = px + r * D;
    double mu = 0.0;
    for (int64_t j = 0; j < D; ++j) mu += row[j];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (int64_t j = 0; j < D; ++j) {
      const double d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    (*invstd)[static_cast<size_t>(r)] = is;
    double* xh = xhat->data() + r * D;
    double* orow = po + r * D;
    for (int64_t j = 0; j < D; ++j) {
      xh[j] = (row[j] - mu) * is;
      orow[j] = xh[j] * pg[j] + pb[j];
    }
  }
  check_finite(out, "layer_norm");
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int nx = tp->node_of(x), ng = tp->node_of(gain), nb = tp->node_of(bias);
  if (nx < 0 && ng < 0 && nb < 0) return out;
  tp->record(out, [nx, ng, nb, R, D, xhat, invstd, gv = gain](Tape& t, const double* g) {
    const double* pg2 = gv.data();
    double* gx = nx >= 0 ? t.grad_buf(nx) : nullptr;
    double* gg = ng >= 0 ? t.grad_buf(ng) : nullptr;
    double* gb = nb >= 0 ? t.grad_buf(nb) : nullptr;
    std::vector<double> h(static_cast<size_t>(D));
    for (int64_t r = 0; r < R; ++r) {
      const double* gr = g + r * D;
      const double* xh = xhat->data() + r * D;
      if (gg)
        for (int64_t j = 0; j < D; ++j) gg[j] += gr[j] * xh[j];
      if (gb)
        for (int64_t j = 0; j < D; ++j) gb[j] += gr[j];
      if (gx) {
        double m1 = 0.0, m2 = 0.0;
        for (int64_t j = 0; j < D; ++j) {
          h[static_cast<size_t>(j)] = gr[j] * pg2[j];
          m1 += h[static_cast<size_t>(j)];
          m2 += h[static_cast<size_t>(j)] * xh[j];
        }
        m1 /= static_cast<double>(D);
        m2 /= static_cast<double>(D);
        const double is = (*invstd)[static_cast<size_t>(r)];
        double* gxr = gx + r * D;
        for (int64_t j = 0; j < D; ++j)
          gxr[j] += is * (h[static_cast<size_t>(j)] - m1 - xh[j] * m2);
      }
    }
  });
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const double> weights) {
  if (!logits.defined() || logits.rank() < 2)
    throw ShapeError("cross_entropy: logits must have rank >= 2");
  const int64_t V = logits.dim(-1), R = logits.size() / V;
  if (static_cast<int64_t>(targets.size()) != R || static_cast<int64_t>(weights.size()) != R)
    throw ShapeError("cross_entropy: need " + std::to_string(R) + " targets/weights, got " +
                     std::to_string(targets.size()) + "/" + std::to_string(weights.size()));
  for (int64_t r = 0; r < R; ++r)
    if (targets[static_cast<size_t>(r)] < 0 || targets[static_cast<size_t>(r)] >= V)
      throw IndexError("cross_entropy: target " + std::to_string(targets[static_cast<size_t>(r)]) +
                       " outside vocab " + std::to_string(V) + " at row " + std::to_string(r));
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(logits.size()));
  auto tgt = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  auto wts = std::make_shared<std::vector<double>>(weights.begin(), weights.end());
  const double* px = logits.data();
  double wsum = 0.0, acc = 0.0;
  for (int64_t r = 0; r < R; ++r) wsum += (*wts)[static_cast<size_t>(r)];
  for (int64_t r = 0; r < R; ++r) {
    const double w = (*wts)[static_cast<size_t>(r)];
    const double* row = px + r * V;
    double* prow = probs->data() + r * V;
    double mx = row[0];
    for (int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int64_t j = 0; j < V; ++j) {
      prow[j] = std::exp(row[j] - mx);
      s += prow[j];
    }
    const double inv = 1.0 / s;
    for (int64_t j = 0; j < V; ++j) prow[j] *= inv;
    if (w != 0.0) {
      const double lse = mx + std::log(s);
      acc += w * (lse - row[targets[static_cast<size_t>(r)]]);
    }
  }
  Tensor out = Tensor::scalar(wsum > 0.0 ? acc / wsum : 0.0);
  check_finite(out, "cross_entropy");
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int nx = tp->node_of(logits);
  if (nx < 0) return out;
  if (wsum <= 0.0) {
    // all-zero weights: loss is constant 0 with zero gradient
    tp->record(out, [](Tape&, const double*) {});
    return out;
  }
  tp->record(out, [nx, R, V, probs, tgt, wts, wsum](Tape& t, const double* g) {
    double* gx = t.grad_buf(nx);
    const double g0 = g[0] / wsum;
    for (int64_t r = 0; r < R; ++r) {
      const double w = (*wts)[static_cast<size_t>(r)];
      if (w == 0.0) continue;
      const double* prow = probs->data() + r * V;
      double* grow = gx + r * V;
      const double c = g0 * w;
      for (int64_t j = 0; j < V; ++j) grow[j] += c * prow[j];
      grow[(*tgt)[static_cast<size_t>(r)]] -= c;
    }
  });
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (!a.defined() || !b.defined()) throw ContractError("concat: undefined input");
  if (a.rank() != b.rank()) throw ShapeError("concat: rank mismatch");
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("concat: bad axis");
  for (int i = 0; i < r; ++i)
    if (i != axis && a.dim(i) != b.dim(i))
      throw ShapeError("concat: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                       " on axis " + std::to_string(axis));
  Shape os = a.shape();
  os[static_cast<size_t>(axis)] += b.dim(axis);
  Tensor out(os);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);
  const int64_t wa = a.dim(axis) * inner, wb = b.dim(axis) * inner, wo = wa + wb;
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    std::copy(pa + o * wa, pa + (o + 1) * wa, po + o * wo);
    std::copy(pb + o * wb, pb + (o + 1) * wb, po + o * wo + wa);
  }
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int na = tp->node_of(a), nb = tp->node_of(b);
  if (na < 0 && nb < 0) return out;
  tp->record(out, [na, nb, outer, wa, wb, wo](Tape& t, const double* g) {
    if (na >= 0) {
      double* ga = t.grad_buf(na);
      for (int64_t o = 0; o < outer; ++o) MapA(ga + o * wa, wa) += CMapA(g + o * wo, wa);
    }
    if (nb >= 0) {
      double* gb = t.grad_buf(nb);
      for (int64_t o = 0; o < outer; ++o) MapA(gb + o * wb, wb) += CMapA(g + o * wo + wa, wb);
    }
  });
  return out;
}

Tensor narrow(const Tensor& x, int axis, int64_t start, int64_t len) {
  if (!x.defined()) throw ContractError("narrow: undefined input");
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("narrow: bad axis");
  if (len <= 0 || start < 0 || start + len > x.dim(axis))
    throw ShapeError("narrow: window [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") outside dim " +
                     std::to_string(x.dim(axis)));
  Shape os = x.shape();
  os[static_cast<size_t>(axis)] = len;
  Tensor out(os);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);
  const int64_t wx = x.dim(axis) * inner, wo = len * inner, off = start * inner;
  const double* px = x.data();
  double* po = out.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy(px + o * wx + off, px + o * wx + off + wo, po + o * wo);
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int nx = tp->node_of(x);
  if (nx < 0) return out;
  tp->record(out, [nx, outer, wx, wo, off](Tape& t, const double* g) {
    double* gx = t.grad_buf(nx);
    for (int64_t o = 0; o < outer; ++o) MapA(gx + o * wx + off, wo) += CMapA(g + o * wo, wo);
  });
  return out;
}

Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& lead) {
  if (!table.defined() || table.rank() != 2) throw ShapeError("embedding: table must be [V, D]");
  const int64_t V = table.dim(0), D = table.dim(1);
  const int64_t n = shape_size(lead);
  if (static_cast<int64_t>(ids.size()) != n)
    throw ShapeError("embedding: " + std::to_string(ids.size()) + " ids do not fill " +
                     shape_str(lead));
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || ids[i] >= V)
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside vocab " +
                       std::to_string(V));
  Shape os = lead;
  os.push_back(D);
  Tensor out(os);
  const double* pt = table.data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i)
    std::copy(pt + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * D,
              pt + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * D + D, po + i * D);
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int nt = tp->node_of(table);
  if (nt < 0) return out;
  auto idv = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  tp->record(out, [nt, n, D, idv](Tape& t, const double* g) {
    double* gt = t.grad_buf(nt);
    for (int64_t i = 0; i < n; ++i)
      MapA(gt + static_cast<int64_t>((*idv)[static_cast<size_t>(i)]) * D, D) += CMapA(g + i * D, D);
  });
  return out;
}

Tensor sum(const Tensor& x) {
  if (!x.defined()) throw ContractError("sum: undefined input");
  const int64_t n = x.size();
  Tensor out = Tensor::scalar(CMapA(x.data(), n).sum());
  check_finite(out, "sum");
  Tape* tp = Tape::active();
  if (!tp) return out;
  const int nx = tp->node_of(x);
  if (nx < 0) return out;
  tp->record(out, [nx, n](Tape& t, const double* g) { MapA(t.grad_buf(nx), n) += g[0]; });
  return out;
}

}  // namespace exin
