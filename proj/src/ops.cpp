#include "ftrl/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace ftrl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*ln(2*pi)

Graph& same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw ContractViolation("operands belong to different graphs");
  }
  return *a.graph;
}

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw ContractViolation("invalid Var");
  return *a.graph;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ContractViolation(std::string(op) + ": incompatible shapes " +
                          a.shape_str() + " and " + b.shape_str());
}

enum class Broadcast { kNone, kScalar, kRow };

Broadcast classify_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Broadcast::kNone;
  if (b.numel() == 1) return Broadcast::kScalar;
  if (a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.shape()[1]) {
    return Broadcast::kRow;
  }
  shape_error(op, a, b);
}

// Reduce an elementwise gradient of a's shape back onto the broadcast rhs.
Tensor reduce_to_rhs(const Tensor& grad_full, const Tensor& b, Broadcast bc) {
  if (bc == Broadcast::kNone) return grad_full;
  if (bc == Broadcast::kScalar) {
    double s = 0.0;
    for (double v : grad_full.data()) s += v;
    return Tensor::full(b.shape(), s);
  }
  const int m = grad_full.rows();
  const int n = grad_full.cols();
  Tensor out = Tensor::zeros(b.shape());
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) out.at(c) += grad_full.at(r, c);
  }
  return out;
}

double rhs_value(const Tensor& b, Broadcast bc, int r, int c, int cols) {
  switch (bc) {
    case Broadcast::kNone:
      return b.at(static_cast<std::int64_t>(r) * cols + c);
    case Broadcast::kScalar:
      return b.at(0);
    case Broadcast::kRow:
      return b.at(c);
  }
  return 0.0;
}

template <typename Fwd>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, Broadcast bc,
                          Fwd f) {
  Tensor out = Tensor::zeros(a.shape());
  const int m = a.rows();
  const int n = a.cols();
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) {
      const std::int64_t i = static_cast<std::int64_t>(r) * n + c;
      out.at(i) = f(a.at(i), rhs_value(b, bc, r, c, n));
    }
  }
  return out;
}

// Slicing helper shared by softmax/layer_norm: iterate the tensor as
// `count` slices of `len` elements with a fixed stride.
struct AxisView {
  std::int64_t count;
  std::int64_t len;
  std::int64_t outer_stride;  // between slices
  std::int64_t inner_stride;  // between elements of one slice
};

AxisView axis_view(const char* op, const Tensor& a, int axis) {
  if (a.rank() == 1) {
    if (axis != 0) {
      throw ContractViolation(std::string(op) + ": axis " + std::to_string(axis) +
                              " invalid for shape " + a.shape_str());
    }
    return {1, a.numel(), 0, 1};
  }
  if (a.rank() == 2) {
    const int m = a.shape()[0];
    const int n = a.shape()[1];
    if (axis == 1) return {m, n, n, 1};        // across each row
    if (axis == 0) return {n, m, 1, n};        // down each column
    throw ContractViolation(std::string(op) + ": axis " + std::to_string(axis) +
                            " invalid for shape " + a.shape_str());
  }
  throw ContractViolation(std::string(op) + ": rank-1 or rank-2 input required, got " +
                          a.shape_str());
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (ta.rank() < 1 || ta.rank() > 2 || tb.rank() < 1 || tb.rank() > 2) {
    shape_error("matmul", ta, tb);
  }
  const int ar = ta.rank() == 2 ? ta.shape()[0] : 1;
  const int ak = ta.rank() == 2 ? ta.shape()[1] : ta.shape()[0];
  const int bk = tb.rank() == 2 ? tb.shape()[0] : tb.shape()[0];
  const int bc = tb.rank() == 2 ? tb.shape()[1] : 1;
  if (ak != bk) shape_error("matmul", ta, tb);

  ConstMatMap A(ta.data().data(), ar, ak);
  ConstMatMap B(tb.data().data(), bk, bc);
  MatRM C = A * B;

  std::vector<int> out_shape;
  if (ta.rank() == 2 && tb.rank() == 2) out_shape = {ar, bc};
  else if (ta.rank() == 1 && tb.rank() == 2) out_shape = {bc};
  else if (ta.rank() == 2 && tb.rank() == 1) out_shape = {ar};
  // both rank-1: dot product -> rank-0 scalar
  Tensor out = Tensor::from(out_shape,
                            std::vector<double>(C.data(), C.data() + C.size()));

  const int m = ar, k = ak, n = bc;
  return g.add_node(
      "matmul", {a.id, b.id}, std::move(out),
      [m, k, n](const Graph& gr, std::span<const int> in, const Tensor&,
                const Tensor& gout, GradSink& sink) {
        const Tensor& va = gr.value(Var{in[0], const_cast<Graph*>(&gr)});
        const Tensor& vb = gr.value(Var{in[1], const_cast<Graph*>(&gr)});
        ConstMatMap A(va.data().data(), m, k);
        ConstMatMap B(vb.data().data(), k, n);
        ConstMatMap G(gout.data().data(), m, n);
        MatRM dA = G * B.transpose();
        MatRM dB = A.transpose() * G;
        sink.add(in[0], Tensor::from(va.shape(),
                                     std::vector<double>(dA.data(), dA.data() + dA.size())));
        sink.add(in[1], Tensor::from(vb.shape(),
                                     std::vector<double>(dB.data(), dB.data() + dB.size())));
      });
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  const Broadcast bc = classify_broadcast("add", ta, tb);
  Tensor out = elementwise_binary(ta, tb, bc,
                                  [](double x, double y) { return x + y; });
  return g.add_node(
      "add", {a.id, b.id}, std::move(out),
      [bc](const Graph& gr, std::span<const int> in, const Tensor&,
           const Tensor& gout, GradSink& sink) {
        const Tensor& vb = gr.value(Var{in[1], const_cast<Graph*>(&gr)});
        sink.add(in[0], gout);
        sink.add(in[1], reduce_to_rhs(gout, vb, bc));
      });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  const Broadcast bc = classify_broadcast("sub", ta, tb);
  Tensor out = elementwise_binary(ta, tb, bc,
                                  [](double x, double y) { return x - y; });
  return g.add_node(
      "sub", {a.id, b.id}, std::move(out),
      [bc](const Graph& gr, std::span<const int> in, const Tensor&,
           const Tensor& gout, GradSink& sink) {
        const Tensor& vb = gr.value(Var{in[1], const_cast<Graph*>(&gr)});
        sink.add(in[0], gout);
        Tensor gb = reduce_to_rhs(gout, vb, bc);
        for (double& v : gb.mutable_data()) v = -v;
        sink.add(in[1], std::move(gb));
      });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  const Broadcast bc = classify_broadcast("mul", ta, tb);
  Tensor out = elementwise_binary(ta, tb, bc,
                                  [](double x, double y) { return x * y; });
  return g.add_node(
      "mul", {a.id, b.id}, std::move(out),
      [bc](const Graph& gr, std::span<const int> in, const Tensor&,
           const Tensor& gout, GradSink& sink) {
        const Tensor& va = gr.value(Var{in[0], const_cast<Graph*>(&gr)});
        const Tensor& vb = gr.value(Var{in[1], const_cast<Graph*>(&gr)});
        const int m = va.rows();
        const int n = va.cols();
        Tensor da = Tensor::zeros(va.shape());
        Tensor ga_full = Tensor::zeros(va.shape());  // gout * a, reduced onto b
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < n; ++c) {
            const std::int64_t i = static_cast<std::int64_t>(r) * n + c;
            da.at(i) = gout.at(i) * rhs_value(vb, bc, r, c, n);
            ga_full.at(i) = gout.at(i) * va.at(i);
          }
        }
        sink.add(in[0], std::move(da));
        sink.add(in[1], reduce_to_rhs(ga_full, vb, bc));
      });
}

Var scale(Var a, double c) {
  Graph& g = graph_of(a);
  Tensor out = g.value(a);
  for (double& v : out.mutable_data()) v *= c;
  return g.add_node(
      "scale", {a.id}, std::move(out),
      [c](const Graph&, std::span<const int> in, const Tensor&,
          const Tensor& gout, GradSink& sink) {
        Tensor gin = gout;
        for (double& v : gin.mutable_data()) v *= c;
        sink.add(in[0], std::move(gin));
      });
}

Var add_scalar(Var a, double c) {
  Graph& g = graph_of(a);
  Tensor out = g.value(a);
  for (double& v : out.mutable_data()) v += c;
  return g.add_node(
      "add_scalar", {a.id}, std::move(out),
      [](const Graph&, std::span<const int> in, const Tensor&,
         const Tensor& gout, GradSink& sink) { sink.add(in[0], gout); });
}

Var tanh(Var a) {
  Graph& g = graph_of(a);
  Tensor out = g.value(a);
  for (double& v : out.mutable_data()) v = std::tanh(v);
  return g.add_node(
      "tanh", {a.id}, std::move(out),
      [](const Graph&, std::span<const int> in, const Tensor& y,
         const Tensor& gout, GradSink& sink) {
        Tensor gin = gout;
        auto gd = gin.mutable_data();
        const auto yd = y.data();
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= 1.0 - yd[i] * yd[i];
        sink.add(in[0], std::move(gin));
      });
}

Var exp(Var a) {
  Graph& g = graph_of(a);
  Tensor out = g.value(a);
  for (double& v : out.mutable_data()) v = std::exp(v);
  return g.add_node(
      "exp", {a.id}, std::move(out),
      [](const Graph&, std::span<const int> in, const Tensor& y,
         const Tensor& gout, GradSink& sink) {
        Tensor gin = gout;
        auto gd = gin.mutable_data();
        const auto yd = y.data();
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= yd[i];
        sink.add(in[0], std::move(gin));
      });
}

Var log(Var a) {
  Graph& g = graph_of(a);
  Tensor out = g.value(a);
  for (double& v : out.mutable_data()) v = std::log(v);
  return g.add_node(
      "log", {a.id}, std::move(out),
      [](const Graph& gr, std::span<const int> in, const Tensor&,
         const Tensor& gout, GradSink& sink) {
        const Tensor& x = gr.value(Var{in[0], const_cast<Graph*>(&gr)});
        Tensor gin = gout;
        auto gd = gin.mutable_data();
        const auto xd = x.data();
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] /= xd[i];
        sink.add(in[0], std::move(gin));
      });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  double s = 0.0;
  for (double v : g.value(a).data()) s += v;
  return g.add_node(
      "sum", {a.id}, Tensor::scalar(s),
      [](const Graph& gr, std::span<const int> in, const Tensor&,
         const Tensor& gout, GradSink& sink) {
        const Tensor& x = gr.value(Var{in[0], const_cast<Graph*>(&gr)});
        sink.add(in[0], Tensor::full(x.shape(), gout.at(0)));
      });
}

Var mean(Var a) {
  Graph& g = graph_of(a);
  const Tensor& ta = g.value(a);
  double s = 0.0;
  for (double v : ta.data()) s += v;
  const double n = static_cast<double>(ta.numel());
  return g.add_node(
      "mean", {a.id}, Tensor::scalar(s / n),
      [n](const Graph& gr, std::span<const int> in, const Tensor&,
          const Tensor& gout, GradSink& sink) {
        const Tensor& x = gr.value(Var{in[0], const_cast<Graph*>(&gr)});
        sink.add(in[0], Tensor::full(x.shape(), gout.at(0) / n));
      });
}

Var mean_over_rows(Var a) {
  Graph& g = graph_of(a);
  const Tensor& ta = g.value(a);
  if (ta.rank() != 2) {
    throw ContractViolation("mean_over_rows: rank-2 input required, got " +
                            ta.shape_str());
  }
  const int m = ta.shape()[0];
  const int n = ta.shape()[1];
  Tensor out = Tensor::zeros({n});
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) out.at(c) += ta.at(r, c);
  }
  for (double& v : out.mutable_data()) v /= m;
  return g.add_node(
      "mean_over_rows", {a.id}, std::move(out),
      [m, n](const Graph&, std::span<const int> in, const Tensor&,
             const Tensor& gout, GradSink& sink) {
        Tensor gin = Tensor::zeros({m, n});
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < n; ++c) gin.at(r, c) = gout.at(c) / m;
        }
        sink.add(in[0], std::move(gin));
      });
}

Var softmax(Var a, int axis) {
  Graph& g = graph_of(a);
  const Tensor& ta = g.value(a);
  const AxisView view = axis_view("softmax", ta, axis);
  Tensor out = Tensor::zeros(ta.shape());
  for (std::int64_t s = 0; s < view.count; ++s) {
    const std::int64_t base = s * view.outer_stride;
    double mx = ta.at(base);
    for (std::int64_t i = 1; i < view.len; ++i) {
      mx = std::max(mx, ta.at(base + i * view.inner_stride));
    }
    double denom = 0.0;
    for (std::int64_t i = 0; i < view.len; ++i) {
      const std::int64_t idx = base + i * view.inner_stride;
      const double e = std::exp(ta.at(idx) - mx);
      out.at(idx) = e;
      denom += e;
    }
    for (std::int64_t i = 0; i < view.len; ++i) {
      const std::int64_t idx = base + i * view.inner_stride;
      out.at(idx) /= denom;
    }
  }
  return g.add_node(
      "softmax", {a.id}, std::move(out),
      [view](const Graph&, std::span<const int> in, const Tensor& y,
             const Tensor& gout, GradSink& sink) {
        Tensor gin = Tensor::zeros(y.shape());
        for (std::int64_t s = 0; s < view.count; ++s) {
          const std::int64_t base = s * view.outer_stride;
          double dot = 0.0;
          for (std::int64_t i = 0; i < view.len; ++i) {
            const std::int64_t idx = base + i * view.inner_stride;
            dot += gout.at(idx) * y.at(idx);
          }
          for (std::int64_t i = 0; i < view.len; ++i) {
            const std::int64_t idx = base + i * view.inner_stride;
            gin.at(idx) = y.at(idx) * (gout.at(idx) - dot);
          }
        }
        sink.add(in[0], std::move(gin));
      });
}

Var layer_norm(Var a, int axis, double eps) {
  if (eps < 0.0) {
    throw ContractViolation("layer_norm: eps must be >= 0, got " +
                            std::to_string(eps));
  }
  Graph& g = graph_of(a);
  const Tensor& ta = g.value(a);
  const AxisView view = axis_view("layer_norm", ta, axis);
  Tensor out = Tensor::zeros(ta.shape());
  std::vector<double> sigmas(static_cast<std::size_t>(view.count));
  for (std::int64_t s = 0; s < view.count; ++s) {
    const std::int64_t base = s * view.outer_stride;
    double mu = 0.0;
    for (std::int64_t i = 0; i < view.len; ++i) {
      mu += ta.at(base + i * view.inner_stride);
    }
    mu /= static_cast<double>(view.len);
    double var = 0.0;
    for (std::int64_t i = 0; i < view.len; ++i) {
      const double d = ta.at(base + i * view.inner_stride) - mu;
      var += d * d;
    }
    var /= static_cast<double>(view.len);
    const double sigma = std::sqrt(var + eps);
    sigmas[static_cast<std::size_t>(s)] = sigma;
    for (std::int64_t i = 0; i < view.len; ++i) {
      const std::int64_t idx = base + i * view.inner_stride;
      out.at(idx) = (ta.at(idx) - mu) / sigma;
    }
  }
  return g.add_node(
      "layer_norm", {a.id}, std::move(out),
      [view, sigmas](const Graph&, std::span<const int> in, const Tensor& y,
                     const Tensor& gout, GradSink& sink) {
        Tensor gin = Tensor::zeros(y.shape());
        for (std::int64_t s = 0; s < view.count; ++s) {
          const std::int64_t base = s * view.outer_stride;
          const double n = static_cast<double>(view.len);
          double mg = 0.0, mgy = 0.0;
          for (std::int64_t i = 0; i < view.len; ++i) {
            const std::int64_t idx = base + i * view.inner_stride;
            mg += gout.at(idx);
            mgy += gout.at(idx) * y.at(idx);
          }
          mg /= n;
          mgy /= n;
          const double sigma = sigmas[static_cast<std::size_t>(s)];
          for (std::int64_t i = 0; i < view.len; ++i) {
            const std::int64_t idx = base + i * view.inner_stride;
            gin.at(idx) = (gout.at(idx) - mg - y.at(idx) * mgy) / sigma;
          }
        }
        sink.add(in[0], std::move(gin));
      });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor& ta = g.value(a);
  if (ta.rank() != 2) {
    throw ContractViolation("transpose: rank-2 input required, got " +
                            ta.shape_str());
  }
  const int m = ta.shape()[0];
  const int n = ta.shape()[1];
  Tensor out = Tensor::zeros({n, m});
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) out.at(c, r) = ta.at(r, c);
  }
  return g.add_node(
      "transpose", {a.id}, std::move(out),
      [m, n](const Graph&, std::span<const int> in, const Tensor&,
             const Tensor& gout, GradSink& sink) {
        Tensor gin = Tensor::zeros({m, n});
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < n; ++c) gin.at(r, c) = gout.at(c, r);
        }
        sink.add(in[0], std::move(gin));
      });
}

namespace {

struct ConcatPlan {
  std::vector<int> ids;
  std::vector<std::vector<int>> in_shapes;
};

}  // namespace

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: no inputs");
  Graph& g = graph_of(parts[0]);
  int total_rows = 0;
  int n = -1;
  ConcatPlan plan;
  for (Var p : parts) {
    same_graph(parts[0], p);
    const Tensor& t = g.value(p);
    if (t.rank() != 1 && t.rank() != 2) {
      throw ContractViolation("concat_rows: rank-1/2 parts required, got " +
                              t.shape_str());
    }
    const int cols = t.cols();
    if (n >= 0 && cols != n) {
      throw ContractViolation("concat_rows: column mismatch " +
                              std::to_string(n) + " vs " + t.shape_str());
    }
    n = cols;
    total_rows += t.rows();
    plan.ids.push_back(p.id);
    plan.in_shapes.push_back(t.shape());
  }
  Tensor out = Tensor::zeros({total_rows, n});
  int row = 0;
  for (Var p : parts) {
    const Tensor& t = g.value(p);
    for (int r = 0; r < t.rows(); ++r) {
      for (int c = 0; c < n; ++c) out.at(row + r, c) = t.at(static_cast<std::int64_t>(r) * n + c);
    }
    row += t.rows();
  }
  const int cols = n;
  return g.add_node(
      "concat_rows", plan.ids, std::move(out),
      [shapes = plan.in_shapes, cols](const Graph&, std::span<const int> in,
                                      const Tensor&, const Tensor& gout,
                                      GradSink& sink) {
        int row = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          Tensor gin = Tensor::zeros(shapes[k]);
          const int rows = gin.rows();
          for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
              gin.at(static_cast<std::int64_t>(r) * cols + c) = gout.at(row + r, c);
            }
          }
          sink.add(in[k], std::move(gin));
          row += rows;
        }
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat_cols: no inputs");
  Graph& g = graph_of(parts[0]);
  bool any_rank2 = false;
  for (Var p : parts) {
    same_graph(parts[0], p);
    any_rank2 = any_rank2 || g.value(p).rank() == 2;
  }
  int rows = 1;
  int total_cols = 0;
  ConcatPlan plan;
  for (Var p : parts) {
    const Tensor& t = g.value(p);
    if (any_rank2 && t.rank() != 2) {
      throw ContractViolation("concat_cols: cannot mix rank-2 with " +
                              t.shape_str());
    }
    if (t.rank() == 2) {
      if (plan.ids.empty()) rows = t.shape()[0];
      if (t.shape()[0] != rows) {
        throw ContractViolation("concat_cols: row mismatch " +
                                std::to_string(rows) + " vs " + t.shape_str());
      }
      total_cols += t.shape()[1];
    } else {
      total_cols += static_cast<int>(t.numel());
    }
    plan.ids.push_back(p.id);
    plan.in_shapes.push_back(t.shape());
  }
  std::vector<int> out_shape = any_rank2 ? std::vector<int>{rows, total_cols}
                                         : std::vector<int>{total_cols};
  Tensor out = Tensor::zeros(out_shape);
  int col = 0;
  for (Var p : parts) {
    const Tensor& t = g.value(p);
    const int w = any_rank2 ? t.shape()[1] : static_cast<int>(t.numel());
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < w; ++c) {
        out.at(static_cast<std::int64_t>(r) * total_cols + col + c) =
            t.at(static_cast<std::int64_t>(r) * w + c);
      }
    }
    col += w;
  }
  const int nrows = rows;
  const int ncols = total_cols;
  return g.add_node(
      "concat_cols", plan.ids, std::move(out),
      [shapes = plan.in_shapes, nrows, ncols](const Graph&, std::span<const int> in,
                                              const Tensor&, const Tensor& gout,
                                              GradSink& sink) {
        int col = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          Tensor gin = Tensor::zeros(shapes[k]);
          const int w = shapes[k].size() == 2 ? shapes[k][1]
                                              : static_cast<int>(gin.numel());
          for (int r = 0; r < nrows; ++r) {
            for (int c = 0; c < w; ++c) {
              gin.at(static_cast<std::int64_t>(r) * w + c) =
                  gout.at(static_cast<std::int64_t>(r) * ncols + col + c);
            }
          }
          sink.add(in[k], std::move(gin));
          col += w;
        }
      });
}

double gaussian_log_density(double x, double mean, double log_std) {
  const double z = (x - mean) * std::exp(-log_std);
  return -kHalfLog2Pi - log_std - 0.5 * z * z;
}

Var gaussian_log_prob(Var x, Var mean, Var log_std) {
  Graph& g = same_graph(x, mean);
  same_graph(x, log_std);
  const Tensor& tx = g.value(x);
  const Tensor& tm = g.value(mean);
  const Tensor& ts = g.value(log_std);
  if (!tx.same_shape(tm) || !tx.same_shape(ts)) {
    throw ContractViolation("gaussian_log_prob: shapes must match, got " +
                            tx.shape_str() + ", " + tm.shape_str() + ", " +
                            ts.shape_str());
  }
  Tensor out = Tensor::zeros(tx.shape());
  for (std::int64_t i = 0; i < tx.numel(); ++i) {
    out.at(i) = gaussian_log_density(tx.at(i), tm.at(i), ts.at(i));
  }
  return g.add_node(
      "gaussian_log_prob", {x.id, mean.id, log_std.id}, std::move(out),
      [](const Graph& gr, std::span<const int> in, const Tensor&,
         const Tensor& gout, GradSink& sink) {
        Graph* gp = const_cast<Graph*>(&gr);
        const Tensor& vx = gr.value(Var{in[0], gp});
        const Tensor& vm = gr.value(Var{in[1], gp});
        const Tensor& vs = gr.value(Var{in[2], gp});
        Tensor dx = Tensor::zeros(vx.shape());
        Tensor dm = Tensor::zeros(vx.shape());
        Tensor ds = Tensor::zeros(vx.shape());
        for (std::int64_t i = 0; i < vx.numel(); ++i) {
          const double inv_sigma = std::exp(-vs.at(i));
          const double z = (vx.at(i) - vm.at(i)) * inv_sigma;
          dx.at(i) = gout.at(i) * (-z * inv_sigma);
          dm.at(i) = gout.at(i) * (z * inv_sigma);
          ds.at(i) = gout.at(i) * (z * z - 1.0);
        }
        sink.add(in[0], std::move(dx));
        sink.add(in[1], std::move(dm));
        sink.add(in[2], std::move(ds));
      });
}

Var clipped_surrogate(Var ratio, double advantage, double eps) {
  Graph& g = graph_of(ratio);
  const Tensor& tr = g.value(ratio);
  if (tr.numel() != 1) {
    throw ContractViolation("clipped_surrogate: scalar ratio required, got " +
                            tr.shape_str());
  }
  if (eps <= 0.0) {
    throw ContractViolation("clipped_surrogate: eps must be > 0");
  }
  const double rho = tr.at(0);
  const double clipped = std::min(std::max(rho, 1.0 - eps), 1.0 + eps);
  const double value = std::min(rho * advantage, clipped * advantage);
  return g.add_node(
      "clipped_surrogate", {ratio.id}, Tensor::scalar(value),
      [advantage, eps](const Graph& gr, std::span<const int> in, const Tensor&,
                       const Tensor& gout, GradSink& sink) {
        const Tensor& vr = gr.value(Var{in[0], const_cast<Graph*>(&gr)});
        const double rho = vr.at(0);
        const bool saturated = (advantage >= 0.0 && rho > 1.0 + eps) ||
                               (advantage < 0.0 && rho < 1.0 - eps);
        const double d = saturated ? 0.0 : advantage;
        sink.add(in[0], Tensor::from(vr.shape(), {gout.at(0) * d}));
      });
}

}  // namespace ftrl
