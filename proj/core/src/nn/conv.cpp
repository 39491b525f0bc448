// Matrix product and convolution ops. Convolutions lower to im2col + GEMM;
// the three conv ops are mutually adjoint so every derivative, including
// second order, stays inside this family.

#include <Eigen/Core>
#include <stdexcept>
#include <string>

#include "bpa/nn/ops.hpp"

namespace bpa::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvDims {
  int64_t n, cin, h, w;
  int64_t cout, k;
  int64_t ho, wo;
  int stride, pad;

  int64_t col_rows() const { return cin * k * k; }
  int64_t col_cols() const { return ho * wo; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* x, const ConvDims& d, double* cols) {
  const int64_t plane = d.ho * d.wo;
  for (int64_t c = 0; c < d.cin; ++c) {
    const double* xc = x + c * d.h * d.w;
    for (int64_t ky = 0; ky < d.k; ++ky) {
      for (int64_t kx = 0; kx < d.k; ++kx) {
        double* row = cols + ((c * d.k + ky) * d.k + kx) * plane;
        for (int64_t oy = 0; oy < d.ho; ++oy) {
          const int64_t iy = oy * d.stride - d.pad + ky;
          double* dst = row + oy * d.wo;
          if (iy < 0 || iy >= d.h) {
            for (int64_t ox = 0; ox < d.wo; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* src = xc + iy * d.w;
          for (int64_t ox = 0; ox < d.wo; ++ox) {
            const int64_t ix = ox * d.stride - d.pad + kx;
            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvDims& d, double* x) {
  const int64_t plane = d.ho * d.wo;
  for (int64_t c = 0; c < d.cin; ++c) {
    double* xc = x + c * d.h * d.w;
    for (int64_t ky = 0; ky < d.k; ++ky) {
      for (int64_t kx = 0; kx < d.k; ++kx) {
        const double* row = cols + ((c * d.k + ky) * d.k + kx) * plane;
        for (int64_t oy = 0; oy < d.ho; ++oy) {
          const int64_t iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) continue;
          const double* src = row + oy * d.wo;
          double* dst = xc + iy * d.w;
          for (int64_t ox = 0; ox < d.wo; ++ox) {
            const int64_t ix = ox * d.stride - d.pad + kx;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

ConvDims dims_from(const Shape& x, const Shape& w, ConvGeometry geom, const char* op) {
  if (x.size() != 4 || w.size() != 4) {
    throw std::invalid_argument(std::string(op) + ": expected rank-4 input and weight, got " + shape_str(x) +
                                " and " + shape_str(w));
  }
  if (w[2] != w[3]) throw std::invalid_argument(std::string(op) + ": only square kernels are supported");
  if (x[1] != w[1]) {
    throw std::invalid_argument(std::string(op) + ": channel mismatch " + shape_str(x) + " vs weight " +
                                shape_str(w));
  }
  ConvDims d{x[0], x[1], x[2], x[3], w[0], w[2], 0, 0, geom.stride, geom.pad};
  d.ho = conv_out_size(d.h, d.k, geom);
  d.wo = conv_out_size(d.w, d.k, geom);
  if (d.ho <= 0 || d.wo <= 0) {
    throw std::invalid_argument(std::string(op) + ": empty output for input " + shape_str(x));
  }
  return d;
}

Tensor conv_forward(const Tensor& x, const Tensor& w, const ConvDims& d) {
  Tensor y({d.n, d.cout, d.ho, d.wo});
  ConstMapMat wm(w.ptr(), d.cout, d.col_rows());
  RowMat cols(d.col_rows(), d.col_cols());
  for (int64_t n = 0; n < d.n; ++n) {
    const double* xn = x.ptr() + n * d.cin * d.h * d.w;
    MapMat yn(y.ptr() + n * d.cout * d.col_cols(), d.cout, d.col_cols());
    if (d.is_pointwise()) {
      yn.noalias() = wm * ConstMapMat(xn, d.cin, d.col_cols());
    } else {
      im2col(xn, d, cols.data());
      yn.noalias() = wm * cols;
    }
  }
  return y;
}

Tensor conv_input_grad(const Tensor& g, const Tensor& w, const ConvDims& d) {
  Tensor dx({d.n, d.cin, d.h, d.w}, 0.0);
  ConstMapMat wm(w.ptr(), d.cout, d.col_rows());
  RowMat cols(d.col_rows(), d.col_cols());
  for (int64_t n = 0; n < d.n; ++n) {
    ConstMapMat gn(g.ptr() + n * d.cout * d.col_cols(), d.cout, d.col_cols());
    double* dxn = dx.ptr() + n * d.cin * d.h * d.w;
    if (d.is_pointwise()) {
      MapMat(dxn, d.cin, d.col_cols()).noalias() = wm.transpose() * gn;
    } else {
      cols.noalias() = wm.transpose() * gn;
      col2im_add(cols.data(), d, dxn);
    }
  }
  return dx;
}

Tensor conv_weight_grad(const Tensor& x, const Tensor& g, const ConvDims& d) {
  Tensor dw({d.cout, d.cin, d.k, d.k}, 0.0);
  MapMat dwm(dw.ptr(), d.cout, d.col_rows());
  RowMat cols(d.col_rows(), d.col_cols());
  for (int64_t n = 0; n < d.n; ++n) {
    const double* xn = x.ptr() + n * d.cin * d.h * d.w;
    ConstMapMat gn(g.ptr() + n * d.cout * d.col_cols(), d.cout, d.col_cols());
    if (d.is_pointwise()) {
      dwm.noalias() += gn * ConstMapMat(xn, d.cin, d.col_cols()).transpose();
    } else {
      im2col(xn, d, cols.data());
      dwm.noalias() += gn * cols.transpose();
    }
  }
  return dw;
}

}  // namespace

int64_t conv_out_size(int64_t in, int64_t kernel, ConvGeometry geom) {
  return (in + 2 * geom.pad - kernel) / geom.stride + 1;
}

Var conv2d(const Var& x, const Var& w, ConvGeometry geom) {
  ConvDims d = dims_from(x.shape(), w.shape(), geom, "conv2d");
  return make_op("conv2d", conv_forward(x.value(), w.value(), d), {x, w},
                 [geom, d](const Node& self, const Var& g) {
                   const Var& in = self.inputs[0];
                   const Var& wt = self.inputs[1];
                   Var gx = in.requires_grad() ? conv_transpose2d(g, wt, geom, d.h, d.w) : Var{};
                   Var gw = wt.requires_grad() ? conv2d_weight(in, g, geom, d.k) : Var{};
                   return std::vector<Var>{gx, gw};
                 });
}

Var conv_transpose2d(const Var& g, const Var& w, ConvGeometry geom, int64_t out_h, int64_t out_w) {
  const Shape& gs = g.shape();
  const Shape& ws = w.shape();
  if (gs.size() != 4 || ws.size() != 4 || gs[1] != ws[0]) {
    throw std::invalid_argument("conv_transpose2d: incompatible " + shape_str(gs) + " and weight " + shape_str(ws));
  }
  ConvDims d = dims_from({gs[0], ws[1], out_h, out_w}, ws, geom, "conv_transpose2d");
  if (d.ho != gs[2] || d.wo != gs[3]) {
    throw std::invalid_argument("conv_transpose2d: output size " + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + " inconsistent with input " + shape_str(gs));
  }
  return make_op("conv_transpose2d", conv_input_grad(g.value(), w.value(), d), {g, w},
                 [geom, d](const Node& self, const Var& gout) {
                   const Var& in = self.inputs[0];
                   const Var& wt = self.inputs[1];
                   Var gg = in.requires_grad() ? conv2d(gout, wt, geom) : Var{};
                   Var gw = wt.requires_grad() ? conv2d_weight(gout, in, geom, d.k) : Var{};
                   return std::vector<Var>{gg, gw};
                 });
}

Var conv2d_weight(const Var& x, const Var& g, ConvGeometry geom, int64_t kernel) {
  const Shape& xs = x.shape();
  const Shape& gs = g.shape();
  if (xs.size() != 4 || gs.size() != 4 || xs[0] != gs[0]) {
    throw std::invalid_argument("conv2d_weight: incompatible " + shape_str(xs) + " and " + shape_str(gs));
  }
  ConvDims d = dims_from(xs, {gs[1], xs[1], kernel, kernel}, geom, "conv2d_weight");
  if (d.ho != gs[2] || d.wo != gs[3]) throw std::invalid_argument("conv2d_weight: gradient shape mismatch");
  return make_op("conv2d_weight", conv_weight_grad(x.value(), g.value(), d), {x, g},
                 [geom, d](const Node& self, const Var& gw) {
                   const Var& in = self.inputs[0];
                   const Var& go = self.inputs[1];
                   Var gx = in.requires_grad() ? conv_transpose2d(go, gw, geom, d.h, d.w) : Var{};
                   Var gg = go.requires_grad() ? conv2d(in, gw, geom) : Var{};
                   return std::vector<Var>{gx, gg};
                 });
}

Var matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2) {
    throw std::invalid_argument("matmul: expected 2-D operands, got " + shape_str(as) + " and " + shape_str(bs));
  }
  const int64_t m = transpose_a ? as[1] : as[0];
  const int64_t ka = transpose_a ? as[0] : as[1];
  const int64_t kb = transpose_b ? bs[1] : bs[0];
  const int64_t n = transpose_b ? bs[0] : bs[1];
  if (ka != kb) throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(as) + " x " + shape_str(bs));

  Tensor out({m, n});
  ConstMapMat am(a.value().ptr(), as[0], as[1]);
  ConstMapMat bm(b.value().ptr(), bs[0], bs[1]);
  MapMat om(out.ptr(), m, n);
  if (!transpose_a && !transpose_b) om.noalias() = am * bm;
  if (transpose_a && !transpose_b) om.noalias() = am.transpose() * bm;
  if (!transpose_a && transpose_b) om.noalias() = am * bm.transpose();
  if (transpose_a && transpose_b) om.noalias() = am.transpose() * bm.transpose();

  return make_op("matmul", std::move(out), {a, b}, [transpose_a, transpose_b](const Node& self, const Var& g) {
    const Var& x = self.inputs[0];
    const Var& y = self.inputs[1];
    Var gx, gy;
    if (!transpose_a && !transpose_b) {
      if (x.requires_grad()) gx = matmul(g, y, false, true);
      if (y.requires_grad()) gy = matmul(x, g, true, false);
    } else if (transpose_a && !transpose_b) {
      if (x.requires_grad()) gx = matmul(y, g, false, true);
      if (y.requires_grad()) gy = matmul(x, g, false, false);
    } else if (!transpose_a && transpose_b) {
      if (x.requires_grad()) gx = matmul(g, y, false, false);
      if (y.requires_grad()) gy = matmul(g, x, true, false);
    } else {
      if (x.requires_grad()) gx = matmul(y, g, true, true);
      if (y.requires_grad()) gy = matmul(g, x, true, true);
    }
    return std::vector<Var>{gx, gy};
  });
}

}  // namespace bpa::nn
