#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace naf::ad {

// Reverse-mode tape over dense matrix nodes. Rebuilt every optimizer step;
// backward() runs one full reverse sweep from a scalar root.
enum class Op {
  kInput,
  kParam,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kCMul,
  kCDiv,
  kAddRowVec,
  kScaleByScalar,
  kConstScale,
  kConstAdd,
  kConcatCols,
  kConcatRows,
  kSliceCols,
  kSliceRows,
  kTileRows,
  kStackBlocksToCols,
  kRowwiseSum,
  kSumAll,
  kMeanAll,
  kSoftplus,
  kSigmoid,
  kExp,
  kLog,
  kSin,
  kCos,
  kSqrt,
  kAbs,
  kSquare,
  kNeg,
  kClamp,
  kMaxElem,
  kMinElem,
  kHuber,
  kBce,
  kCumprodExclRows,
  kCompositeRows,
  kPEEncode,
  kPETangent,
  kHashEncode,
  kSincSqrt,
  kVersineRatio,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParam: return "param";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kCMul: return "cmul";
    case Op::kCDiv: return "cdiv";
    case Op::kAddRowVec: return "add_rowvec";
    case Op::kScaleByScalar: return "scale_by_scalar";
    case Op::kConstScale: return "const_scale";
    case Op::kConstAdd: return "const_add";
    case Op::kConcatCols: return "concat_cols";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kSliceRows: return "slice_rows";
    case Op::kTileRows: return "tile_rows";
    case Op::kStackBlocksToCols: return "stack_blocks_to_cols";
    case Op::kRowwiseSum: return "rowwise_sum";
    case Op::kSumAll: return "sum_all";
    case Op::kMeanAll: return "mean_all";
    case Op::kSoftplus: return "softplus";
    case Op::kSigmoid: return "sigmoid";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kSqrt: return "sqrt";
    case Op::kAbs: return "abs";
    case Op::kSquare: return "square";
    case Op::kNeg: return "neg";
    case Op::kClamp: return "clamp";
    case Op::kMaxElem: return "max_elem";
    case Op::kMinElem: return "min_elem";
    case Op::kHuber: return "huber";
    case Op::kBce: return "bce";
    case Op::kCumprodExclRows: return "cumprod_exclusive_rows";
    case Op::kCompositeRows: return "composite_rows";
    case Op::kPEEncode: return "pe_encode";
    case Op::kPETangent: return "pe_tangent";
    case Op::kHashEncode: return "hash_encode";
    case Op::kSincSqrt: return "sinc_sqrt";
    case Op::kVersineRatio: return "versine_ratio";
  }
  return "?";
}

struct HashGridConfig {
  int levels = 12;
  int table_size = 1 << 14;  // entries per level, power of two
  int features = 2;
  int base_resolution = 4;
  double growth = 1.5;

  std::vector<int> resolutions() const {
    std::vector<int> r(levels);
    double res = base_resolution;
    for (int l = 0; l < levels; ++l) {
      r[l] = std::max(2, (int)std::floor(res));
      res *= growth;
    }
    return r;
  }
  int output_dim() const { return levels * features; }
};

template <typename T>
class Tape {
 public:
  using Id = int;
  using Mat = MatX<T>;

  struct Node {
    Op op;
    std::vector<Id> args;
    Mat val;
    Mat grad;            // lazily sized on first accumulation
    bool needs_grad = false;
    double a0 = 0, a1 = 0;  // scalar attributes
    int i0 = 0, i1 = 0, i2 = 0;
    Mat aux;             // constant payload (labels etc.)
  };

  Id input(Mat v) { return push(Op::kInput, {}, std::move(v), false); }

  Id param(Mat v) { return push(Op::kParam, {}, std::move(v), true); }

  Id matmul(Id a, Id b) {
    shape_require(cols(a) == rows(b), "matmul");
    return push(Op::kMatMul, {a, b}, val(a) * val(b));
  }

  Id transpose(Id a) { return push(Op::kTranspose, {a}, val(a).transpose()); }

  Id add(Id a, Id b) {
    shape_require(same_shape(a, b), "add");
    return push(Op::kAdd, {a, b}, val(a) + val(b));
  }

  Id sub(Id a, Id b) {
    shape_require(same_shape(a, b), "sub");
    return push(Op::kSub, {a, b}, val(a) - val(b));
  }

  Id cmul(Id a, Id b) {
    shape_require(same_shape(a, b), "cmul");
    return push(Op::kCMul, {a, b}, val(a).cwiseProduct(val(b)));
  }

  Id cdiv(Id a, Id b) {
    shape_require(same_shape(a, b), "cdiv");
    return push(Op::kCDiv, {a, b}, val(a).cwiseQuotient(val(b)));
  }

  Id add_rowvec(Id a, Id r) {
    shape_require(rows(r) == 1 && cols(r) == cols(a), "add_rowvec");
    Mat out = val(a);
    out.rowwise() += val(r).row(0);
    return push(Op::kAddRowVec, {a, r}, std::move(out));
  }

  Id scale_by_scalar(Id a, Id s) {
    shape_require(rows(s) == 1 && cols(s) == 1, "scale_by_scalar");
    return push(Op::kScaleByScalar, {a, s}, val(a) * val(s)(0, 0));
  }

  Id const_scale(Id a, double c) {
    auto n = push(Op::kConstScale, {a}, val(a) * (T)c);
    node(n).a0 = c;
    return n;
  }

  Id const_add(Id a, double c) {
    auto n = push(Op::kConstAdd, {a}, Mat((val(a).array() + (T)c).matrix()));
    node(n).a0 = c;
    return n;
  }

  Id concat_cols(Id a, Id b) {
    shape_require(rows(a) == rows(b), "concat_cols");
    Mat out(rows(a), cols(a) + cols(b));
    out << val(a), val(b);
    return push(Op::kConcatCols, {a, b}, std::move(out));
  }

  Id concat_rows(Id a, Id b) {
    shape_require(cols(a) == cols(b), "concat_rows");
    Mat out(rows(a) + rows(b), cols(a));
    out << val(a), val(b);
    return push(Op::kConcatRows, {a, b}, std::move(out));
  }

  Id slice_cols(Id a, int j0, int n) {
    shape_require(j0 >= 0 && n >= 0 && j0 + n <= cols(a), "slice_cols");
    auto id = push(Op::kSliceCols, {a}, val(a).middleCols(j0, n));
    node(id).i0 = j0;
    node(id).i1 = n;
    return id;
  }

  Id slice_rows(Id a, int i0, int n) {
    shape_require(i0 >= 0 && n >= 0 && i0 + n <= rows(a), "slice_rows");
    auto id = push(Op::kSliceRows, {a}, val(a).middleRows(i0, n));
    node(id).i0 = i0;
    node(id).i1 = n;
    return id;
  }

  Id tile_rows(Id a, int k) {
    shape_require(k >= 1, "tile_rows");
    Mat out(rows(a) * k, cols(a));
    for (int b = 0; b < k; ++b) out.middleRows(b * rows(a), rows(a)) = val(a);
    auto id = push(Op::kTileRows, {a}, std::move(out));
    node(id).i0 = k;
    return id;
  }

  // (k*n)x1 stacked blocks -> n x k, column b = block b.
  Id stack_blocks_to_cols(Id a, int k) {
    shape_require(cols(a) == 1 && rows(a) % k == 0, "stack_blocks_to_cols");
    int n = (int)rows(a) / k;
    Mat out(n, k);
    for (int b = 0; b < k; ++b) out.col(b) = val(a).middleRows(b * n, n);
    auto id = push(Op::kStackBlocksToCols, {a}, std::move(out));
    node(id).i0 = k;
    return id;
  }

  Id rowwise_sum(Id a) { return push(Op::kRowwiseSum, {a}, val(a).rowwise().sum()); }

  Id sum_all(Id a) {
    Mat out(1, 1);
    out(0, 0) = val(a).sum();
    return push(Op::kSumAll, {a}, std::move(out));
  }

  Id mean_all(Id a) {
    Mat out(1, 1);
    out(0, 0) = val(a).mean();
    return push(Op::kMeanAll, {a}, std::move(out));
  }

  Id softplus(Id a, double beta) {
    Mat out = val(a).unaryExpr([beta](T x) {
      double bx = beta * (double)x;
      if (bx > 30.0) return x;
      return (T)(std::log1p(std::exp(bx)) / beta);
    });
    auto id = push(Op::kSoftplus, {a}, std::move(out));
    node(id).a0 = beta;
    return id;
  }

  Id sigmoid(Id a) {
    Mat out = val(a).unaryExpr([](T x) {
      return (T)(x >= 0 ? 1.0 / (1.0 + std::exp(-(double)x))
                        : std::exp((double)x) / (1.0 + std::exp((double)x)));
    });
    return push(Op::kSigmoid, {a}, std::move(out));
  }

  Id exp(Id a) { return push(Op::kExp, {a}, Mat(val(a).array().exp().matrix())); }
  Id log(Id a) { return push(Op::kLog, {a}, Mat(val(a).array().log().matrix())); }
  Id sin(Id a) { return push(Op::kSin, {a}, Mat(val(a).array().sin().matrix())); }
  Id cos(Id a) { return push(Op::kCos, {a}, Mat(val(a).array().cos().matrix())); }
  Id sqrt(Id a) { return push(Op::kSqrt, {a}, Mat(val(a).array().sqrt().matrix())); }
  Id abs(Id a) { return push(Op::kAbs, {a}, Mat(val(a).array().abs().matrix())); }
  Id square(Id a) { return push(Op::kSquare, {a}, Mat(val(a).array().square().matrix())); }
  Id neg(Id a) { return push(Op::kNeg, {a}, -val(a)); }

  Id clamp(Id a, double lo, double hi) {
    auto id = push(Op::kClamp, {a}, Mat(val(a).array().max((T)lo).min((T)hi).matrix()));
    node(id).a0 = lo;
    node(id).a1 = hi;
    return id;
  }

  // Ties resolve to the first argument.
  Id max_elem(Id a, Id b) {
    shape_require(same_shape(a, b), "max_elem");
    return push(Op::kMaxElem, {a, b},
                val(a).binaryExpr(val(b), [](T x, T y) { return x >= y ? x : y; }));
  }

  Id min_elem(Id a, Id b) {
    shape_require(same_shape(a, b), "min_elem");
    return push(Op::kMinElem, {a, b},
                val(a).binaryExpr(val(b), [](T x, T y) { return x <= y ? x : y; }));
  }

  Id huber(Id a, double delta) {
    Mat out = val(a).unaryExpr([delta](T x) {
      double r = std::fabs((double)x);
      return (T)(r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta));
    });
    auto id = push(Op::kHuber, {a}, std::move(out));
    node(id).a0 = delta;
    return id;
  }

  Id bce(Id p, Mat labels, double eps = 1e-7) {
    shape_require(rows(p) == labels.rows() && cols(p) == labels.cols(), "bce");
    Mat out = val(p).binaryExpr(labels, [eps](T pv, T y) {
      double q = std::min(std::max((double)pv, eps), 1.0 - eps);
      return (T)(-((double)y * std::log(q) + (1.0 - (double)y) * std::log(1.0 - q)));
    });
    auto id = push(Op::kBce, {p}, std::move(out));
    node(id).a0 = eps;
    node(id).aux = std::move(labels);
    return id;
  }

  Id cumprod_exclusive_rows(Id a) {
    const Mat& x = val(a);
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      T acc = (T)1;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        out(i, j) = acc;
        acc *= x(i, j);
      }
    }
    return push(Op::kCumprodExclRows, {a}, std::move(out));
  }

  // weights: R x n, values: (R*n) x d sample-major (sample i of ray r at
  // row i*R + r, matching the stack_blocks_to_cols layout).
  Id composite_rows(Id w, Id v) {
    int R = (int)rows(w), n = (int)cols(w);
    shape_require(rows(v) == (Eigen::Index)R * n, "composite_rows");
    int d = (int)cols(v);
    Mat out = Mat::Zero(R, d);
    const Mat& wv = val(w);
    const Mat& vv = val(v);
    for (int r = 0; r < R; ++r)
      for (int i = 0; i < n; ++i) out.row(r) += wv(r, i) * vv.row(i * R + r);
    return push(Op::kCompositeRows, {w, v}, std::move(out));
  }

  // [x | sin(c_k x), cos(c_k x) per band], c_k = pi * 2^k.
  Id pe_encode(Id x, int bands, bool include_input) {
    shape_require(cols(x) == 3, "pe_encode");
    int n = (int)rows(x);
    int D = (include_input ? 3 : 0) + 6 * bands;
    Mat out(n, D);
    const Mat& xv = val(x);
    int c = 0;
    if (include_input) {
      out.leftCols(3) = xv;
      c = 3;
    }
    for (int k = 0; k < bands; ++k) {
      T ck = (T)(M_PI * std::pow(2.0, k));
      out.middleCols(c, 3) = (xv * ck).array().sin().matrix();
      out.middleCols(c + 3, 3) = (xv * ck).array().cos().matrix();
      c += 6;
    }
    auto id = push(Op::kPEEncode, {x}, std::move(out));
    node(id).i0 = bands;
    node(id).i1 = include_input ? 1 : 0;
    return id;
  }

  // Canonical-direction Jacobian blocks of pe_encode: block b rows = dPE/dx_b.
  Id pe_tangent(Id x, int bands, bool include_input) {
    shape_require(cols(x) == 3, "pe_tangent");
    int n = (int)rows(x);
    int D = (include_input ? 3 : 0) + 6 * bands;
    Mat out = Mat::Zero(3 * n, D);
    const Mat& xv = val(x);
    for (int b = 0; b < 3; ++b) {
      int c = 0;
      if (include_input) {
        out.block(b * n, b, n, 1).setOnes();
        c = 3;
      }
      for (int k = 0; k < bands; ++k) {
        T ck = (T)(M_PI * std::pow(2.0, k));
        out.block(b * n, c + b, n, 1) = (ck * (xv.col(b) * ck).array().cos()).matrix();
        out.block(b * n, c + 3 + b, n, 1) = (-ck * (xv.col(b) * ck).array().sin()).matrix();
        c += 6;
      }
    }
    auto id = push(Op::kPETangent, {x}, std::move(out));
    node(id).i0 = bands;
    node(id).i1 = include_input ? 1 : 0;
    return id;
  }

  // Multiresolution trilinear hash grid over [-1,1]^3; args: x then one table per level.
  Id hash_encode(Id x, const std::vector<Id>& tables, const HashGridConfig& cfg) {
    shape_require(cols(x) == 3, "hash_encode");
    shape_require((int)tables.size() == cfg.levels, "hash_encode");
    auto res = cfg.resolutions();
    int n = (int)rows(x);
    int F = cfg.features;
    Mat out = Mat::Zero(n, cfg.levels * F);
    const Mat& xv = val(x);
    for (int l = 0; l < cfg.levels; ++l) {
      const Mat& tbl = val(tables[l]);
      shape_require(tbl.rows() == cfg.table_size && tbl.cols() == F, "hash_encode table");
      for (int i = 0; i < n; ++i) {
        CornerSet cs = corners(xv.row(i), res[l], cfg.table_size);
        for (int c = 0; c < 8; ++c)
          out.row(i).segment(l * F, F) += cs.w[c] * tbl.row(cs.idx[c]);
      }
    }
    std::vector<Id> args;
    args.push_back(x);
    for (Id t : tables) args.push_back(t);
    auto id = push(Op::kHashEncode, args, std::move(out));
    hash_cfgs_.push_back(cfg);
    node(id).i0 = (int)hash_cfgs_.size() - 1;
    return id;
  }

  Id sinc_sqrt(Id q) {
    Mat out = val(q).unaryExpr([](T x) {
      double v = (double)x;
      if (v < 1e-6) return (T)(1.0 - v / 6.0 + v * v / 120.0);
      double r = std::sqrt(v);
      return (T)(std::sin(r) / r);
    });
    return push(Op::kSincSqrt, {q}, std::move(out));
  }

  Id versine_ratio(Id q) {
    Mat out = val(q).unaryExpr([](T x) {
      double v = (double)x;
      if (v < 1e-6) return (T)(0.5 - v / 24.0 + v * v / 720.0);
      double sh = std::sin(0.5 * std::sqrt(v));
      return (T)(2.0 * sh * sh / v);
    });
    return push(Op::kVersineRatio, {q}, std::move(out));
  }

  // --- access ---
  const Mat& val(Id id) const { return nodes_[id].val; }
  T scalar(Id id) const {
    shape_require(rows(id) == 1 && cols(id) == 1, "scalar");
    return nodes_[id].val(0, 0);
  }
  Eigen::Index rows(Id id) const { return nodes_[id].val.rows(); }
  Eigen::Index cols(Id id) const { return nodes_[id].val.cols(); }
  Node& node(Id id) { return nodes_[id]; }
  const Node& node(Id id) const { return nodes_[id]; }
  size_t size() const { return nodes_.size(); }

  const Mat& grad(Id id) {
    Node& nd = nodes_[id];
    if (nd.grad.size() == 0) nd.grad = Mat::Zero(nd.val.rows(), nd.val.cols());
    return nd.grad;
  }

  // First node holding a non-finite value, or -1.
  Id first_nonfinite() const {
    for (size_t i = 0; i < nodes_.size(); ++i)
      if (!nodes_[i].val.allFinite()) return (Id)i;
    return -1;
  }

  void backward(Id root) {
    shape_require(rows(root) == 1 && cols(root) == 1, "backward root");
    require(nodes_[root].needs_grad, Errc::invalid_argument,
            "backward: root does not depend on any parameter");
    accum(root) = Mat::Ones(1, 1);
    for (Id id = root; id >= 0; --id) {
      Node& nd = nodes_[id];
      if (!nd.needs_grad || nd.grad.size() == 0) continue;
      backward_node(id, nd);
    }
  }

 private:
  struct CornerSet {
    int idx[8];
    T w[8];
    T dwdp[8][3];    // dw/dpos (grid units)
    bool clamped[3];
  };

  template <typename RowT>
  CornerSet corners(const RowT& xrow, int res, int table_size) const {
    CornerSet cs;
    double scale = res - 1;
    double f[3];
    int c0[3];
    for (int d = 0; d < 3; ++d) {
      double u = ((double)xrow(d) + 1.0) * 0.5;
      cs.clamped[d] = (u <= 0.0 || u >= 1.0);
      u = std::min(std::max(u, 0.0), 1.0);
      double pos = u * scale;
      int ci = (int)std::floor(pos);
      ci = std::min(std::max(ci, 0), res - 2);
      c0[d] = ci;
      f[d] = pos - ci;
    }
    bool dense = (int64_t)res * res * res <= table_size;
    for (int c = 0; c < 8; ++c) {
      int b[3] = {c & 1, (c >> 1) & 1, (c >> 2) & 1};
      uint32_t cx = (uint32_t)(c0[0] + b[0]), cy = (uint32_t)(c0[1] + b[1]),
               cz = (uint32_t)(c0[2] + b[2]);
      uint32_t h;
      if (dense)
        h = cx + (uint32_t)res * (cy + (uint32_t)res * cz);
      else
        h = (cx * 1u) ^ (cy * 2654435761u) ^ (cz * 805459861u);
      cs.idx[c] = (int)(h & (uint32_t)(table_size - 1));
      double w[3], dw[3];
      for (int d = 0; d < 3; ++d) {
        w[d] = b[d] ? f[d] : 1.0 - f[d];
        dw[d] = b[d] ? 1.0 : -1.0;
      }
      cs.w[c] = (T)(w[0] * w[1] * w[2]);
      cs.dwdp[c][0] = (T)(dw[0] * w[1] * w[2]);
      cs.dwdp[c][1] = (T)(w[0] * dw[1] * w[2]);
      cs.dwdp[c][2] = (T)(w[0] * w[1] * dw[2]);
    }
    return cs;
  }

  Id push(Op op, std::vector<Id> args, Mat val, bool needs_grad_self = false) {
    Node nd;
    nd.op = op;
    nd.args = std::move(args);
    nd.val = std::move(val);
    nd.needs_grad = needs_grad_self;
    for (Id a : nd.args)
      if (nodes_[a].needs_grad) nd.needs_grad = true;
    nodes_.push_back(std::move(nd));
    return (Id)nodes_.size() - 1;
  }

  Mat& accum(Id id) {
    Node& nd = nodes_[id];
    if (nd.grad.size() == 0) nd.grad = Mat::Zero(nd.val.rows(), nd.val.cols());
    return nd.grad;
  }

  bool wants(Id id) const { return nodes_[id].needs_grad; }

  static bool finite_ok(const Mat& m) { return m.allFinite(); }

  bool same_shape(Id a, Id b) const {
    return rows(a) == rows(b) && cols(a) == cols(b);
  }

  static void shape_require(bool ok, const char* what) {
    if (!ok) raise(Errc::invalid_argument, std::string("tape shape mismatch in ") + what);
  }

  void backward_node(Id id, Node& nd) {
    const Mat& g = nd.grad;
    auto A = [&](int i) -> Id { return nd.args[i]; };
    switch (nd.op) {
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kMatMul:
        if (wants(A(0))) accum(A(0)).noalias() += g * val(A(1)).transpose();
        if (wants(A(1))) accum(A(1)).noalias() += val(A(0)).transpose() * g;
        break;
      case Op::kTranspose:
        if (wants(A(0))) accum(A(0)) += g.transpose();
        break;
      case Op::kAdd:
        if (wants(A(0))) accum(A(0)) += g;
        if (wants(A(1))) accum(A(1)) += g;
        break;
      case Op::kSub:
        if (wants(A(0))) accum(A(0)) += g;
        if (wants(A(1))) accum(A(1)) -= g;
        break;
      case Op::kCMul:
        if (wants(A(0))) accum(A(0)).array() += g.array() * val(A(1)).array();
        if (wants(A(1))) accum(A(1)).array() += g.array() * val(A(0)).array();
        break;
      case Op::kCDiv:
        if (wants(A(0))) accum(A(0)).array() += g.array() / val(A(1)).array();
        if (wants(A(1)))
          accum(A(1)).array() -=
              g.array() * val(A(0)).array() / val(A(1)).array().square();
        break;
      case Op::kAddRowVec:
        if (wants(A(0))) accum(A(0)) += g;
        if (wants(A(1))) accum(A(1)).row(0) += g.colwise().sum();
        break;
      case Op::kScaleByScalar:
        if (wants(A(0))) accum(A(0)) += g * val(A(1))(0, 0);
        if (wants(A(1))) accum(A(1))(0, 0) += (g.array() * val(A(0)).array()).sum();
        break;
      case Op::kConstScale:
        if (wants(A(0))) accum(A(0)) += g * (T)nd.a0;
        break;
      case Op::kConstAdd:
        if (wants(A(0))) accum(A(0)) += g;
        break;
      case Op::kConcatCols:
        if (wants(A(0))) accum(A(0)) += g.leftCols(cols(A(0)));
        if (wants(A(1))) accum(A(1)) += g.rightCols(cols(A(1)));
        break;
      case Op::kConcatRows:
        if (wants(A(0))) accum(A(0)) += g.topRows(rows(A(0)));
        if (wants(A(1))) accum(A(1)) += g.bottomRows(rows(A(1)));
        break;
      case Op::kSliceCols:
        if (wants(A(0))) accum(A(0)).middleCols(nd.i0, nd.i1) += g;
        break;
      case Op::kSliceRows:
        if (wants(A(0))) accum(A(0)).middleRows(nd.i0, nd.i1) += g;
        break;
      case Op::kTileRows:
        if (wants(A(0))) {
          Mat& ga = accum(A(0));
          int n = (int)rows(A(0));
          for (int b = 0; b < nd.i0; ++b) ga += g.middleRows(b * n, n);
        }
        break;
      case Op::kStackBlocksToCols:
        if (wants(A(0))) {
          Mat& ga = accum(A(0));
          int n = (int)nd.val.rows();
          for (int b = 0; b < nd.i0; ++b) ga.middleRows(b * n, n) += g.col(b);
        }
        break;
      case Op::kRowwiseSum:
        if (wants(A(0))) accum(A(0)).colwise() += g.col(0);
        break;
      case Op::kSumAll:
        if (wants(A(0))) accum(A(0)).array() += g(0, 0);
        break;
      case Op::kMeanAll:
        if (wants(A(0))) accum(A(0)).array() += g(0, 0) / (T)val(A(0)).size();
        break;
      case Op::kSoftplus:
        if (wants(A(0))) {
          double beta = nd.a0;
          accum(A(0)).array() +=
              g.array() * val(A(0)).unaryExpr([beta](T x) {
                double bx = beta * (double)x;
                return (T)(bx >= 0 ? 1.0 / (1.0 + std::exp(-bx))
                                   : std::exp(bx) / (1.0 + std::exp(bx)));
              }).array();
        }
        break;
      case Op::kSigmoid:
        if (wants(A(0)))
          accum(A(0)).array() +=
              g.array() * nd.val.array() * ((T)1 - nd.val.array());
        break;
      case Op::kExp:
        if (wants(A(0))) accum(A(0)).array() += g.array() * nd.val.array();
        break;
      case Op::kLog:
        if (wants(A(0))) accum(A(0)).array() += g.array() / val(A(0)).array();
        break;
      case Op::kSin:
        if (wants(A(0)))
          accum(A(0)).array() += g.array() * val(A(0)).array().cos();
        break;
      case Op::kCos:
        if (wants(A(0)))
          accum(A(0)).array() -= g.array() * val(A(0)).array().sin();
        break;
      case Op::kSqrt:
        if (wants(A(0)))
          accum(A(0)).array() += g.array() * (T)0.5 / nd.val.array();
        break;
      case Op::kAbs:
        if (wants(A(0)))
          accum(A(0)).array() +=
              g.array() * val(A(0)).unaryExpr([](T x) {
                return (T)(x > 0 ? 1 : (x < 0 ? -1 : 0));
              }).array();
        break;
      case Op::kSquare:
        if (wants(A(0)))
          accum(A(0)).array() += g.array() * (T)2 * val(A(0)).array();
        break;
      case Op::kNeg:
        if (wants(A(0))) accum(A(0)) -= g;
        break;
      case Op::kClamp:
        if (wants(A(0))) {
          T lo = (T)nd.a0, hi = (T)nd.a1;
          accum(A(0)).array() +=
              g.array() * val(A(0)).unaryExpr([lo, hi](T x) {
                return (T)(x >= lo && x <= hi ? 1 : 0);
              }).array();
        }
        break;
      case Op::kMaxElem:
        if (wants(A(0)))
          accum(A(0)).array() +=
              g.array() * val(A(0)).binaryExpr(val(A(1)), [](T x, T y) {
                return (T)(x >= y ? 1 : 0);
              }).array();
        if (wants(A(1)))
          accum(A(1)).array() +=
              g.array() * val(A(0)).binaryExpr(val(A(1)), [](T x, T y) {
                return (T)(x < y ? 1 : 0);
              }).array();
        break;
      case Op::kMinElem:
        if (wants(A(0)))
          accum(A(0)).array() +=
              g.array() * val(A(0)).binaryExpr(val(A(1)), [](T x, T y) {
                return (T)(x <= y ? 1 : 0);
              }).array();
        if (wants(A(1)))
          accum(A(1)).array() +=
              g.array() * val(A(0)).binaryExpr(val(A(1)), [](T x, T y) {
                return (T)(x > y ? 1 : 0);
              }).array();
        break;
      case Op::kHuber:
        if (wants(A(0))) {
          double delta = nd.a0;
          accum(A(0)).array() +=
              g.array() * val(A(0)).unaryExpr([delta](T x) {
                double r = (double)x;
                if (std::fabs(r) <= delta) return (T)r;
                return (T)(r > 0 ? delta : -delta);
              }).array();
        }
        break;
      case Op::kBce:
        if (wants(A(0))) {
          double eps = nd.a0;
          accum(A(0)).array() +=
              g.array() * val(A(0)).binaryExpr(nd.aux, [eps](T pv, T y) {
                double p = (double)pv;
                if (p < eps || p > 1.0 - eps) return (T)0;
                return (T)((p - (double)y) / (p * (1.0 - p)));
              }).array();
        }
        break;
      case Op::kCumprodExclRows:
        if (wants(A(0))) {
          const Mat& x = val(A(0));
          Mat& ga = accum(A(0));
          for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (Eigen::Index j = 1; j < x.cols(); ++j) {
              T gj = g(i, j);
              if (gj == (T)0) continue;
              T mid = (T)1;
              for (Eigen::Index k = j - 1; k >= 0; --k) {
                ga(i, k) += gj * nd.val(i, k) * mid;
                mid *= x(i, k);
              }
            }
          }
        }
        break;
      case Op::kCompositeRows: {
        int R = (int)rows(A(0)), n = (int)cols(A(0));
        const Mat& wv = val(A(0));
        const Mat& vv = val(A(1));
        if (wants(A(0))) {
          Mat& gw = accum(A(0));
          for (int r = 0; r < R; ++r)
            for (int i = 0; i < n; ++i)
              gw(r, i) += g.row(r).dot(vv.row(i * R + r));
        }
        if (wants(A(1))) {
          Mat& gv = accum(A(1));
          for (int r = 0; r < R; ++r)
            for (int i = 0; i < n; ++i) gv.row(i * R + r) += wv(r, i) * g.row(r);
        }
        break;
      }
      case Op::kPEEncode:
        if (wants(A(0))) {
          const Mat& xv = val(A(0));
          Mat& ga = accum(A(0));
          int bands = nd.i0;
          int c = 0;
          if (nd.i1) {
            ga += g.leftCols(3);
            c = 3;
          }
          for (int k = 0; k < bands; ++k) {
            T ck = (T)(M_PI * std::pow(2.0, k));
            ga.array() += g.middleCols(c, 3).array() * (xv * ck).array().cos() * ck;
            ga.array() -= g.middleCols(c + 3, 3).array() * (xv * ck).array().sin() * ck;
            c += 6;
          }
        }
        break;
      case Op::kPETangent:
        if (wants(A(0))) {
          const Mat& xv = val(A(0));
          Mat& ga = accum(A(0));
          int bands = nd.i0;
          int n = (int)xv.rows();
          for (int b = 0; b < 3; ++b) {
            int c = nd.i1 ? 3 : 0;
            for (int k = 0; k < bands; ++k) {
              T ck = (T)(M_PI * std::pow(2.0, k));
              ga.col(b).array() -= g.block(b * n, c + b, n, 1).array() * ck * ck *
                                   (xv.col(b) * ck).array().sin();
              ga.col(b).array() -= g.block(b * n, c + 3 + b, n, 1).array() * ck * ck *
                                   (xv.col(b) * ck).array().cos();
              c += 6;
            }
          }
        }
        break;
      case Op::kHashEncode: {
        const HashGridConfig& cfg = hash_cfgs_[nd.i0];
        auto res = cfg.resolutions();
        int F = cfg.features;
        const Mat& xv = val(A(0));
        int n = (int)xv.rows();
        bool want_x = wants(A(0));
        for (int l = 0; l < cfg.levels; ++l) {
          Id tid = nd.args[1 + l];
          bool want_t = wants(tid);
          if (!want_t && !want_x) continue;
          const Mat& tbl = val(tid);
          Mat* gt = want_t ? &accum(tid) : nullptr;
          Mat* gx = want_x ? &accum(A(0)) : nullptr;
          double dscale = 0.5 * (res[l] - 1);
          for (int i = 0; i < n; ++i) {
            CornerSet cs = corners(xv.row(i), res[l], cfg.table_size);
            auto grow = g.row(i).segment(l * F, F);
            for (int c = 0; c < 8; ++c) {
              if (gt) gt->row(cs.idx[c]) += cs.w[c] * grow;
              if (gx) {
                T dot = grow.dot(tbl.row(cs.idx[c]));
                for (int d = 0; d < 3; ++d)
                  if (!cs.clamped[d])
                    (*gx)(i, d) += dot * cs.dwdp[c][d] * (T)dscale;
              }
            }
          }
        }
        break;
      }
      case Op::kSincSqrt:
        if (wants(A(0)))
          accum(A(0)).array() +=
              g.array() * val(A(0)).unaryExpr([](T x) {
                double q = (double)x;
                if (q < 1e-6) return (T)(-1.0 / 6.0 + q / 60.0);
                double r = std::sqrt(q);
                return (T)((r * std::cos(r) - std::sin(r)) / (2.0 * q * r));
              }).array();
        break;
      case Op::kVersineRatio:
        if (wants(A(0)))
          accum(A(0)).array() +=
              g.array() * val(A(0)).unaryExpr([](T x) {
                double q = (double)x;
                if (q < 1e-6) return (T)(-1.0 / 24.0 + q / 360.0);
                double r = std::sqrt(q);
                double sh = std::sin(0.5 * r);
                return (T)((0.5 * r * std::sin(r) - 2.0 * sh * sh) / (q * q));
              }).array();
        break;
    }
  }

  std::deque<Node> nodes_;
  std::vector<HashGridConfig> hash_cfgs_;
};

}  // namespace naf::ad
