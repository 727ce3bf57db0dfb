#include "comatch/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <utility>

namespace comatch {

namespace {

std::atomic<std::uint64_t> g_graph_counter{1};

void matmul_accum(const double* a, const double* b, double* out,
                  std::size_t m, std::size_t k, std::size_t n) {
  // out[m x n] += a[m x k] * b[k x n]
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(Shape s) {
  Tensor t;
  t.shape = std::move(s);
  t.data = std::make_shared<std::vector<double>>(shape_numel(t.shape), 0.0);
  return t;
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t = zeros(std::move(s));
  std::fill(t.data->begin(), t.data->end(), v);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape = {};
  t.data = std::make_shared<std::vector<double>>(1, v);
  return t;
}

Tensor Tensor::from(Shape s, std::vector<double> values) {
  if (shape_numel(s) != values.size()) {
    throw ShapeError("tensor: " + shape_str(s) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  Tensor t;
  t.shape = std::move(s);
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m == 0 ? 0 : rows.begin()->size();
  std::vector<double> v;
  v.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw ShapeError("matrix literal: ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return from({m, n}, std::move(v));
}

std::size_t Tensor::rows() const {
  if (shape.size() != 2) throw ShapeError("rows(): tensor is not rank-2, shape " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) throw ShapeError("cols(): tensor is not rank-2, shape " + shape_str(shape));
  return shape[1];
}

double Tensor::item() const {
  if (size() != 1) throw ValueError("item(): tensor has " + std::to_string(size()) + " entries");
  return (*data)[0];
}

bool Tensor::all_finite() const {
  for (double v : *data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::detached_copy() const {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(*data);
  return t;
}

Graph::Graph() : id_(g_graph_counter.fetch_add(1)) {}

std::int32_t Graph::fresh_node(const Shape& shape) {
  Node n;
  n.shape = shape;
  n.grad.assign(shape_numel(shape), 0.0);
  nodes_.push_back(std::move(n));
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

Tensor Graph::make_result(Shape shape, std::vector<double> values,
                          std::function<void(Graph&)> back) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  out.graph_id = id_;
  out.node = fresh_node(out.shape);
  nodes_.back().back = std::move(back);
  return out;
}

std::int32_t Graph::parent_of(const Tensor& t) const {
  if (!t.has_node()) return -1;
  if (t.graph_id != id_) {
    throw ValueError("operand belongs to a different graph (id " +
                     std::to_string(t.graph_id) + " vs " + std::to_string(id_) + ")");
  }
  return t.node;
}

Tensor Graph::input(const Tensor& t) {
  Tensor leaf = t;
  leaf.graph_id = id_;
  leaf.node = fresh_node(t.shape);
  return leaf;
}

Tensor Graph::matmul(const Tensor& x, const Tensor& y) {
  const std::int32_t px = parent_of(x), py = parent_of(y);
  if (x.rank() != 2 || y.rank() != 2) {
    throw ShapeError("matmul: operands must be rank-2, got " + shape_str(x.shape) +
                     " and " + shape_str(y.shape));
  }
  const std::size_t m = x.shape[0], k = x.shape[1], n = y.shape[1];
  if (y.shape[0] != k) {
    throw ShapeError("matmul: inner extents disagree: " + shape_str(x.shape) +
                     " vs " + shape_str(y.shape));
  }
  std::vector<double> out(m * n, 0.0);
  matmul_accum(x.data->data(), y.data->data(), out.data(), m, k, n);
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result({m, n}, std::move(out), [x, y, px, py, m, k, n, on](Graph& g) {
    const std::vector<double>& go = g.slot(on);
    if (px >= 0) {
      // dX = G * Y^T
      std::vector<double>& gx = g.slot(px);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = go.data() + i * n;
          const double* yrow = y.data->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * yrow[j];
          gx[i * k + p] += s;
        }
      }
    }
    if (py >= 0) {
      // dY = X^T * G
      std::vector<double>& gy = g.slot(py);
      for (std::size_t i = 0; i < m; ++i) {
        const double* xrow = x.data->data() + i * k;
        const double* grow = go.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = xrow[p];
          if (xv == 0.0) continue;
          double* gyrow = gy.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gyrow[j] += xv * grow[j];
        }
      }
    }
  });
}

Tensor Graph::transpose(const Tensor& x) {
  const std::int32_t px = parent_of(x);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.at(i, j);
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result({n, m}, std::move(out), [px, m, n, on](Graph& g) {
    if (px < 0) return;
    const std::vector<double>& go = g.slot(on);
    std::vector<double>& gx = g.slot(px);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += go[j * m + i];
  });
}

Tensor Graph::add(const Tensor& x, const Tensor& y) {
  const std::int32_t px = parent_of(x), py = parent_of(y);
  if (x.shape != y.shape) {
    throw ShapeError("add: shapes disagree: " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) + y.at(i);
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result(x.shape, std::move(out), [px, py, on](Graph& g) {
    const std::vector<double>& go = g.slot(on);
    if (px >= 0) {
      std::vector<double>& gx = g.slot(px);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (py >= 0) {
      std::vector<double>& gy = g.slot(py);
      for (std::size_t i = 0; i < go.size(); ++i) gy[i] += go[i];
    }
  });
}

Tensor Graph::sub(const Tensor& x, const Tensor& y) {
  const std::int32_t px = parent_of(x), py = parent_of(y);
  if (x.shape != y.shape) {
    throw ShapeError("sub: shapes disagree: " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) - y.at(i);
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result(x.shape, std::move(out), [px, py, on](Graph& g) {
    const std::vector<double>& go = g.slot(on);
    if (px >= 0) {
      std::vector<double>& gx = g.slot(px);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (py >= 0) {
      std::vector<double>& gy = g.slot(py);
      for (std::size_t i = 0; i < go.size(); ++i) gy[i] -= go[i];
    }
  });
}

Tensor Graph::mul(const Tensor& x, const Tensor& y) {
  const std::int32_t px = parent_of(x), py = parent_of(y);
  if (x.shape != y.shape) {
    throw ShapeError("mul: shapes disagree: " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * y.at(i);
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result(x.shape, std::move(out), [x, y, px, py, on](Graph& g) {
    const std::vector<double>& go = g.slot(on);
    if (px >= 0) {
      std::vector<double>& gx = g.slot(px);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += y.at(i) * go[i];
    }
    if (py >= 0) {
      std::vector<double>& gy = g.slot(py);
      for (std::size_t i = 0; i < go.size(); ++i) gy[i] += x.at(i) * go[i];
    }
  });
}

Tensor Graph::scale(const Tensor& x, double c) {
  const std::int32_t px = parent_of(x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x.at(i);
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result(x.shape, std::move(out), [px, c, on](Graph& g) {
    if (px < 0) return;
    const std::vector<double>& go = g.slot(on);
    std::vector<double>& gx = g.slot(px);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += c * go[i];
  });
}

Tensor Graph::add_rowvec(const Tensor& x, const Tensor& b) {
  const std::int32_t px = parent_of(x), pb = parent_of(b);
  const std::size_t m = x.rows(), n = x.cols();
  if (b.rank() != 1 || b.shape[0] != n) {
    throw ShapeError("add_rowvec: bias " + shape_str(b.shape) + " does not match row width of " +
                     shape_str(x.shape));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i, j) + b.at(j);
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result(x.shape, std::move(out), [px, pb, m, n, on](Graph& g) {
    const std::vector<double>& go = g.slot(on);
    if (px >= 0) {
      std::vector<double>& gx = g.slot(px);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (pb >= 0) {
      std::vector<double>& gb = g.slot(pb);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
    }
  });
}

Tensor Graph::sub_scalar(const Tensor& x, const Tensor& s) {
  const std::int32_t px = parent_of(x), ps = parent_of(s);
  if (s.size() != 1) {
    throw ShapeError("sub_scalar: subtrahend must be scalar, got " + shape_str(s.shape));
  }
  const double sv = (*s.data)[0];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) - sv;
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result(x.shape, std::move(out), [px, ps, on](Graph& g) {
    const std::vector<double>& go = g.slot(on);
    if (px >= 0) {
      std::vector<double>& gx = g.slot(px);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (ps >= 0) {
      double total = 0.0;
      for (double v : go) total += v;
      g.slot(ps)[0] -= total;
    }
  });
}

Tensor Graph::unary(Unary op, const Tensor& x) {
  const std::int32_t px = parent_of(x);
  std::vector<double> out(x.size());
  switch (op) {
    case Unary::Tanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
      break;
    case Unary::Sigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.at(i)));
      break;
    case Unary::Arctan:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::atan(x.at(i));
      break;
    case Unary::Relu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
      break;
    case Unary::Abs:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x.at(i));
      break;
  }
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  // Keep the forward values alive for output-based derivatives.
  Tensor result = make_result(x.shape, std::move(out), nullptr);
  const Tensor y = result;
  nodes_.back().back = [op, x, y, px, on](Graph& g) {
    if (px < 0) return;
    const std::vector<double>& go = g.slot(on);
    std::vector<double>& gx = g.slot(px);
    switch (op) {
      case Unary::Tanh:
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += (1.0 - y.at(i) * y.at(i)) * go[i];
        break;
      case Unary::Sigmoid:
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += y.at(i) * (1.0 - y.at(i)) * go[i];
        break;
      case Unary::Arctan:
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] / (1.0 + x.at(i) * x.at(i));
        break;
      case Unary::Relu:
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += x.at(i) > 0.0 ? go[i] : 0.0;
        break;
      case Unary::Abs:
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += sign0(x.at(i)) * go[i];
        break;
    }
  };
  return result;
}

Tensor Graph::pairwise_l1(const Tensor& x, const Tensor& y) {
  const std::int32_t px = parent_of(x), py = parent_of(y);
  const std::size_t m = x.rows(), d = x.cols(), n = y.rows();
  if (y.cols() != d) {
    throw ShapeError("pairwise_l1: feature widths disagree: " + shape_str(x.shape) + " vs " +
                     shape_str(y.shape));
  }
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x.data->data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* yj = y.data->data() + j * d;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += std::fabs(xi[k] - yj[k]);
      out[i * n + j] = s;
    }
  }
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result({m, n}, std::move(out), [x, y, px, py, m, d, n, on](Graph& g) {
    if (px < 0 && py < 0) return;
    const std::vector<double>& go = g.slot(on);
    for (std::size_t i = 0; i < m; ++i) {
      const double* xi = x.data->data() + i * d;
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = go[i * n + j];
        if (gij == 0.0) continue;
        const double* yj = y.data->data() + j * d;
        for (std::size_t k = 0; k < d; ++k) {
          const double s = sign0(xi[k] - yj[k]);
          if (px >= 0) g.slot(px)[i * d + k] += s * gij;
          if (py >= 0) g.slot(py)[j * d + k] -= s * gij;
        }
      }
    }
  });
}

Tensor Graph::mean_all(const Tensor& x) {
  const std::int32_t px = parent_of(x);
  if (x.size() == 0) throw ValueError("mean_all: empty tensor");
  double s = 0.0;
  for (double v : *x.data) s += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result({}, {s * inv}, [px, inv, on](Graph& g) {
    if (px < 0) return;
    const double go = g.slot(on)[0];
    std::vector<double>& gx = g.slot(px);
    for (double& v : gx) v += go * inv;
  });
}

Tensor Graph::softmax_rows(const Tensor& x) {
  const std::int32_t px = parent_of(x);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data->data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      z += out[i * n + j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= inv;
  }
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  Tensor result = make_result({m, n}, std::move(out), nullptr);
  const Tensor y = result;
  nodes_.back().back = [y, px, m, n, on](Graph& g) {
    if (px < 0) return;
    const std::vector<double>& go = g.slot(on);
    std::vector<double>& gx = g.slot(px);
    for (std::size_t i = 0; i < m; ++i) {
      const double* yrow = y.data->data() + i * n;
      const double* grow = go.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += yrow[j] * grow[j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += yrow[j] * (grow[j] - dot);
    }
  };
  return result;
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::int32_t px = parent_of(x), pg = parent_of(gain), pb = parent_of(bias);
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.rank() != 1 || gain.shape[0] != n || bias.rank() != 1 || bias.shape[0] != n) {
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(n) + "], got " +
                     shape_str(gain.shape) + " and " + shape_str(bias.shape));
  }
  if (n == 0) throw ValueError("layer_norm: zero-width rows");
  std::vector<double> out(m * n);
  std::vector<double> xhat(m * n);
  std::vector<double> invstd(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data->data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    invstd[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mu) * is;
      xhat[i * n + j] = xh;
      out[i * n + j] = xh * gain.at(j) + bias.at(j);
    }
  }
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result(
      {m, n}, std::move(out),
      [gain, px, pg, pb, m, n, on, xhat = std::move(xhat), invstd = std::move(invstd)](Graph& g) {
        const std::vector<double>& go = g.slot(on);
        if (pg >= 0) {
          std::vector<double>& gg = g.slot(pg);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += go[i * n + j] * xhat[i * n + j];
        }
        if (pb >= 0) {
          std::vector<double>& gb = g.slot(pb);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
        }
        if (px >= 0) {
          std::vector<double>& gx = g.slot(px);
          const double invn = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            // dxhat = dy * gain; dx = invstd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = go[i * n + j] * gain.at(j);
              s1 += dxh;
              s2 += dxh * xhat[i * n + j];
            }
            s1 *= invn;
            s2 *= invn;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = go[i * n + j] * gain.at(j);
              gx[i * n + j] += invstd[i] * (dxh - s1 - xhat[i * n + j] * s2);
            }
          }
        }
      });
}

Tensor Graph::cross_entropy(const Tensor& logits, std::size_t label) {
  const std::int32_t pl = parent_of(logits);
  std::size_t c = 0;
  if (logits.rank() == 1) {
    c = logits.shape[0];
  } else if (logits.rank() == 2 && logits.shape[0] == 1) {
    c = logits.shape[1];
  } else {
    throw ShapeError("cross_entropy: logits must be [C] or [1xC], got " + shape_str(logits.shape));
  }
  if (c == 0) throw ValueError("cross_entropy: no classes");
  if (label >= c) {
    throw ValueError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(c) + " classes");
  }
  const double* z = logits.data->data();
  double mx = z[0];
  for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z[j]);
  double sum = 0.0;
  std::vector<double> p(c);
  for (std::size_t j = 0; j < c; ++j) {
    p[j] = std::exp(z[j] - mx);
    sum += p[j];
  }
  const double lse = mx + std::log(sum);
  for (std::size_t j = 0; j < c; ++j) p[j] /= sum;
  const double loss = lse - z[label];
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result({}, {loss}, [pl, label, c, on, p = std::move(p)](Graph& g) {
    if (pl < 0) return;
    const double go = g.slot(on)[0];
    std::vector<double>& gl = g.slot(pl);
    for (std::size_t j = 0; j < c; ++j) gl[j] += (p[j] - (j == label ? 1.0 : 0.0)) * go;
  });
}

Tensor Graph::embed_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
  const std::int32_t pt = parent_of(table);
  const std::size_t v = table.rows(), d = table.cols();
  for (std::size_t id : ids) {
    if (id >= v) {
      throw ValueError("embed_rows: id " + std::to_string(id) + " out of range for table with " +
                       std::to_string(v) + " rows");
    }
  }
  const std::size_t n = ids.size();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = table.data->data() + ids[i] * d;
    std::copy(row, row + d, out.data() + i * d);
  }
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result({n, d}, std::move(out), [pt, ids, d, on](Graph& g) {
    if (pt < 0) return;
    const std::vector<double>& go = g.slot(on);
    std::vector<double>& gt = g.slot(pt);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = gt.data() + ids[i] * d;
      const double* src = go.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

Tensor Graph::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValueError("concat_cols: no parts");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::int32_t> pids;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row counts disagree: " + shape_str(parts.front().shape) +
                       " vs " + shape_str(p.shape));
    }
    pids.push_back(parent_of(p));
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = widths[k];
    for (std::size_t i = 0; i < m; ++i) {
      const double* src = parts[k].data->data() + i * w;
      std::copy(src, src + w, out.data() + i * total + off);
    }
    off += w;
  }
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result({m, total}, std::move(out),
                     [pids = std::move(pids), widths = std::move(widths), m, total, on](Graph& g) {
                       const std::vector<double>& go = g.slot(on);
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < pids.size(); ++k) {
                         const std::size_t w = widths[k];
                         if (pids[k] >= 0) {
                           std::vector<double>& gp = g.slot(pids[k]);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                               gp[i * w + j] += go[i * total + off + j];
                         }
                         off += w;
                       }
                     });
}

Tensor Graph::slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  const std::int32_t px = parent_of(x);
  const std::size_t m = x.rows(), n = x.cols();
  if (c0 > c1 || c1 > n) {
    throw ShapeError("slice_cols: [" + std::to_string(c0) + ", " + std::to_string(c1) +
                     ") out of range for " + shape_str(x.shape));
  }
  const std::size_t w = c1 - c0;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) {
    const double* src = x.data->data() + i * n + c0;
    std::copy(src, src + w, out.data() + i * w);
  }
  const std::int32_t on = static_cast<std::int32_t>(nodes_.size());
  return make_result({m, w}, std::move(out), [px, m, n, c0, w, on](Graph& g) {
    if (px < 0) return;
    const std::vector<double>& go = g.slot(on);
    std::vector<double>& gx = g.slot(px);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * n + c0 + j] += go[i * w + j];
  });
}

void Graph::backward(const Tensor& root) {
  if (root.size() != 1) {
    throw ValueError("backward: root must be scalar, got " + shape_str(root.shape));
  }
  if (!root.has_node() || root.graph_id != id_) {
    throw ValueError("backward: root is not part of this graph");
  }
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  nodes_[static_cast<std::size_t>(root.node)].grad[0] = 1.0;
  for (std::int32_t i = root.node; i >= 0; --i) {
    auto& fn = nodes_[static_cast<std::size_t>(i)].back;
    if (fn) fn(*this);
  }
}

Tensor Graph::gradient(const Tensor& t) const {
  if (!t.has_node() || t.graph_id != id_) {
    throw ValueError("gradient: tensor is not registered in this graph");
  }
  const Node& n = nodes_[static_cast<std::size_t>(t.node)];
  return Tensor::from(t.shape, n.grad);
}

}  // namespace comatch
