#include "diaasq/autograd.h"

#include <cmath>
#include <limits>

#include "diaasq/error.h"

namespace diaasq::ad {

RotaryTable::RotaryTable(const IntMatrix& delta, int dim, double base)
    : n_(static_cast<int>(delta.rows())), dim_(dim), delta_(delta) {
  if (dim <= 0 || dim % 2 != 0) {
    throw ShapeError("rotary dimension must be a positive even number, got " +
                     std::to_string(dim));
  }
  if (n_ == 0) return;
  min_delta_ = delta.minCoeff();
  const int span = delta.maxCoeff() - min_delta_ + 1;
  const int half = dim / 2;
  cos_.resize(static_cast<size_t>(span) * half);
  sin_.resize(static_cast<size_t>(span) * half);
  for (int k = 0; k < half; ++k) {
    const double freq = std::pow(base, -2.0 * k / dim);
    for (int s = 0; s < span; ++s) {
      const double angle = -static_cast<double>(s + min_delta_) * freq;
      cos_[static_cast<size_t>(s) * half + k] = std::cos(angle);
      sin_[static_cast<size_t>(s) * half + k] = std::sin(angle);
    }
  }
}

Var Tape::Push(Matrix value, bool requires_grad, std::function<void()> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::Constant(Matrix value) { return Push(std::move(value), false, nullptr); }

Var Tape::Parameter(const Matrix& value, Matrix* grad) {
  if (grad != nullptr && (grad->rows() != value.rows() || grad->cols() != value.cols())) {
    throw ShapeError("gradient buffer shape does not match its parameter");
  }
  Node n;
  n.ref = &value;
  n.param_grad = grad;
  n.requires_grad = grad != nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.ref != nullptr ? *n.ref : n.value;
}

Matrix& Tape::Grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.param_grad != nullptr) return *n.param_grad;
  if (n.grad.size() == 0) {
    const Matrix& val = value(v);
    n.grad = Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

void Tape::Backward(Var scalar) {
  const Matrix& v = value(scalar);
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("Backward needs a 1x1 value");
  if (!Requires(scalar)) return;
  Grad(scalar)(0, 0) += 1.0;
  for (int i = scalar.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward();
  }
}

namespace {

void CheckSameShape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                     "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Var Tape::MatMul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw ShapeError("MatMul: inner dimensions differ");
  Matrix out = value(a) * value(b);
  const int id = static_cast<int>(size());
  return Push(std::move(out), Requires(a) || Requires(b), [this, a, b, id] {
    const Matrix& g = nodes_[id].grad;
    if (Requires(a)) Grad(a).noalias() += g * value(b).transpose();
    if (Requires(b)) Grad(b).noalias() += value(a).transpose() * g;
  });
}

Var Tape::Add(Var a, Var b) {
  CheckSameShape(value(a), value(b), "Add");
  Matrix out = value(a) + value(b);
  const int id = static_cast<int>(size());
  return Push(std::move(out), Requires(a) || Requires(b), [this, a, b, id] {
    const Matrix& g = nodes_[id].grad;
    if (Requires(a)) Grad(a) += g;
    if (Requires(b)) Grad(b) += g;
  });
}

Var Tape::AddRow(Var x, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(x).cols()) {
    throw ShapeError("AddRow: row vector does not match column count");
  }
  Matrix out = value(x).rowwise() + value(row).row(0);
  const int id = static_cast<int>(size());
  return Push(std::move(out), Requires(x) || Requires(row), [this, x, row, id] {
    const Matrix& g = nodes_[id].grad;
    if (Requires(x)) Grad(x) += g;
    if (Requires(row)) Grad(row) += g.colwise().sum();
  });
}

Var Tape::Scale(Var x, double factor) {
  Matrix out = value(x) * factor;
  const int id = static_cast<int>(size());
  return Push(std::move(out), Requires(x), [this, x, id, factor] {
    Grad(x) += nodes_[id].grad * factor;
  });
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

}  // namespace

Var Tape::Gelu(Var x) {
  const Matrix& in = value(x);
  Matrix out = in.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluK * v * v * v)));
  });
  const int id = static_cast<int>(size());
  return Push(std::move(out), Requires(x), [this, x, id] {
    const Matrix& g = nodes_[id].grad;
    const Matrix& in = value(x);
    Matrix& gx = Grad(x);
    for (Eigen::Index i = 0; i < in.size(); ++i) {
      const double v = in.data()[i];
      const double t = std::tanh(kGeluC * (v + kGeluK * v * v * v));
      const double d =
          0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluK * v * v);
      gx.data()[i] += g.data()[i] * d;
    }
  });
}

Var Tape::LayerNorm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& in = value(x);
  const Eigen::Index rows = in.rows();
  const Eigen::Index cols = in.cols();
  if (value(gamma).cols() != cols || value(beta).cols() != cols) {
    throw ShapeError("LayerNorm: gain/bias width does not match input");
  }
  auto normed = std::make_shared<Matrix>(rows, cols);
  auto inv_std = std::make_shared<Eigen::VectorXd>(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    normed->row(r) = (in.row(r).array() - mean) * (*inv_std)(r);
  }
  Matrix out = (normed->array().rowwise() * value(gamma).row(0).array()).rowwise() +
               value(beta).row(0).array();
  const int id = static_cast<int>(size());
  const bool req = Requires(x) || Requires(gamma) || Requires(beta);
  return Push(std::move(out), req, [this, x, gamma, beta, id, normed, inv_std] {
    const Matrix& g = nodes_[id].grad;
    if (Requires(gamma)) Grad(gamma) += (g.array() * normed->array()).colwise().sum().matrix();
    if (Requires(beta)) Grad(beta) += g.colwise().sum();
    if (!Requires(x)) return;
    Matrix& gx = Grad(x);
    const Eigen::Index cols = g.cols();
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      Eigen::ArrayXd dn = (g.row(r).array() * value(gamma).row(0).array()).transpose();
      Eigen::ArrayXd xn = normed->row(r).array().transpose();
      const double mean_dn = dn.sum() / cols;
      const double mean_dn_xn = (dn * xn).sum() / cols;
      gx.row(r).array() +=
          ((dn - mean_dn - xn * mean_dn_xn) * (*inv_std)(r)).transpose();
    }
  });
}

Var Tape::MulConstant(Var x, const Matrix& factor) {
  CheckSameShape(value(x), factor, "MulConstant");
  auto f = std::make_shared<Matrix>(factor);
  Matrix out = value(x).cwiseProduct(factor);
  const int id = static_cast<int>(size());
  return Push(std::move(out), Requires(x), [this, x, id, f] {
    Grad(x) += nodes_[id].grad.cwiseProduct(*f);
  });
}

Var Tape::Gather(Var table, std::span<const int> rows) {
  const Matrix& t = value(table);
  auto idx = std::make_shared<std::vector<int>>(rows.begin(), rows.end());
  Matrix out(static_cast<Eigen::Index>(idx->size()), t.cols());
  for (size_t r = 0; r < idx->size(); ++r) {
    const int src = (*idx)[r];
    if (src < 0 || src >= t.rows()) throw ShapeError("Gather: row index out of range");
    out.row(static_cast<Eigen::Index>(r)) = t.row(src);
  }
  const int id = static_cast<int>(size());
  return Push(std::move(out), Requires(table), [this, table, id, idx] {
    const Matrix& g = nodes_[id].grad;
    Matrix& gt = Grad(table);
    for (size_t r = 0; r < idx->size(); ++r) {
      gt.row((*idx)[r]) += g.row(static_cast<Eigen::Index>(r));
    }
  });
}

Var Tape::SliceRows(Var x, int start, int count) {
  const Matrix& in = value(x);
  if (start < 0 || count < 0 || start + count > in.rows()) {
    throw ShapeError("SliceRows: range out of bounds");
  }
  Matrix out = in.middleRows(start, count);
  const int id = static_cast<int>(size());
  return Push(std::move(out), Requires(x), [this, x, id, start, count] {
    Grad(x).middleRows(start, count) += nodes_[id].grad;
  });
}

Var Tape::ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("ConcatRows: no inputs");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ShapeError("ConcatRows: column counts differ");
    rows += value(p).rows();
    req |= Requires(p);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  auto inputs = std::make_shared<std::vector<Var>>(parts.begin(), parts.end());
  const int id = static_cast<int>(size());
  return Push(std::move(out), req, [this, id, inputs] {
    const Matrix& g = nodes_[id].grad;
    Eigen::Index at = 0;
    for (Var p : *inputs) {
      const Eigen::Index r = value(p).rows();
      if (Requires(p)) Grad(p) += g.middleRows(at, r);
      at += r;
    }
  });
}

Var Tape::Max(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("Max: no inputs");
  Matrix out = value(parts[0]);
  auto arg = std::make_shared<Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(out.rows(),
                                                                              out.cols()));
  bool req = Requires(parts[0]);
  for (size_t p = 1; p < parts.size(); ++p) {
    const Matrix& v = value(parts[p]);
    CheckSameShape(out, v, "Max");
    req |= Requires(parts[p]);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      if (v.data()[i] > out.data()[i]) {
        out.data()[i] = v.data()[i];
        arg->data()[i] = static_cast<int>(p);
      }
    }
  }
  auto inputs = std::make_shared<std::vector<Var>>(parts.begin(), parts.end());
  const int id = static_cast<int>(size());
  return Push(std::move(out), req, [this, id, inputs, arg] {
    const Matrix& g = nodes_[id].grad;
    for (size_t p = 0; p < inputs->size(); ++p) {
      const Var in = (*inputs)[p];
      if (!Requires(in)) continue;
      Matrix& gi = Grad(in);
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (arg->data()[i] == static_cast<int>(p)) gi.data()[i] += g.data()[i];
      }
    }
  });
}

Var Tape::Attention(Var q, Var k, Var v, int heads, const BoolMatrix* mask) {
  const Matrix& Q = value(q);
  const Matrix& K = value(k);
  const Matrix& V = value(v);
  const Eigen::Index n = Q.rows();
  const Eigen::Index d = Q.cols();
  if (K.rows() != n || V.rows() != n || K.cols() != d || V.cols() != d) {
    throw ShapeError("Attention: q, k, v must share shape");
  }
  if (heads <= 0 || d % heads != 0) throw ShapeError("Attention: heads must divide width");
  if (mask != nullptr && (mask->rows() != n || mask->cols() != n)) {
    throw ShapeError("Attention: mask shape does not match sequence length");
  }
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<std::vector<Matrix>>(heads);
  Matrix out(n, d);
  for (int h = 0; h < heads; ++h) {
    Matrix s = Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose() * scale;
    Matrix& p = (*probs)[h];
    p = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (mask == nullptr || (*mask)(i, j)) mx = std::max(mx, s(i, j));
      }
      if (mx == -std::numeric_limits<double>::infinity()) {
        throw ShapeError("Attention: row " + std::to_string(i) + " is fully masked");
      }
      double z = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (mask == nullptr || (*mask)(i, j)) {
          p(i, j) = std::exp(s(i, j) - mx);
          z += p(i, j);
        }
      }
      p.row(i) /= z;
    }
    out.middleCols(h * dh, dh).noalias() = p * V.middleCols(h * dh, dh);
  }
  const int id = static_cast<int>(size());
  const bool req = Requires(q) || Requires(k) || Requires(v);
  return Push(std::move(out), req, [this, q, k, v, id, heads, dh, scale, probs] {
    const Matrix& g = nodes_[id].grad;
    const Matrix& Q = value(q);
    const Matrix& K = value(k);
    const Matrix& V = value(v);
    for (int h = 0; h < heads; ++h) {
      const Matrix& p = (*probs)[h];
      const Matrix go = g.middleCols(h * dh, dh);
      if (Requires(v)) Grad(v).middleCols(h * dh, dh).noalias() += p.transpose() * go;
      Matrix dp = go * V.middleCols(h * dh, dh).transpose();
      Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
      Matrix ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
      if (Requires(q)) Grad(q).middleCols(h * dh, dh).noalias() += ds * K.middleCols(h * dh, dh);
      if (Requires(k)) {
        Grad(k).middleCols(h * dh, dh).noalias() += ds.transpose() * Q.middleCols(h * dh, dh);
      }
    }
  });
}

Var Tape::RotaryScores(Var q, Var k, int labels, const RotaryTable& table) {
  const Matrix& qv = value(q);
  const Matrix& kv = value(k);
  const int n = static_cast<int>(qv.rows());
  const int dim = table.dim();
  const int half = dim / 2;
  const Eigen::Index width = static_cast<Eigen::Index>(labels) * dim;
  if (qv.cols() != width || kv.cols() != width || kv.rows() != n) {
    throw ShapeError("RotaryScores: expected two " + std::to_string(n) + "x" +
                     std::to_string(width) + " inputs");
  }
  if (table.n() != n) throw ShapeError("RotaryScores: table size does not match sequence");
  Matrix out(static_cast<Eigen::Index>(n) * n, labels);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double* c = table.cos(i, j);
      const double* s = table.sin(i, j);
      for (int r = 0; r < labels; ++r) {
        const double* u = qv.data() + static_cast<size_t>(i) * width + r * dim;
        const double* w = kv.data() + static_cast<size_t>(j) * width + r * dim;
        double acc = 0.0;
        for (int m = 0; m < half; ++m) {
          const double u0 = u[2 * m], u1 = u[2 * m + 1];
          const double w0 = w[2 * m], w1 = w[2 * m + 1];
          acc += c[m] * (u0 * w0 + u1 * w1) + s[m] * (u1 * w0 - u0 * w1);
        }
        out(static_cast<Eigen::Index>(i) * n + j, r) = acc;
      }
    }
  }
  const int id = static_cast<int>(size());
  return Push(std::move(out), Requires(q) || Requires(k), [this, q, k, id, labels, &table] {
    const Matrix& g = nodes_[id].grad;
    const Matrix& qv = value(q);
    const Matrix& kv = value(k);
    const bool need_q = Requires(q);
    const bool need_k = Requires(k);
    double* gq_base = need_q ? Grad(q).data() : nullptr;
    double* gk_base = need_k ? Grad(k).data() : nullptr;
    const int n = static_cast<int>(qv.rows());
    const int dim = table.dim();
    const int half = dim / 2;
    const size_t width = static_cast<size_t>(labels) * dim;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double* c = table.cos(i, j);
        const double* s = table.sin(i, j);
        for (int r = 0; r < labels; ++r) {
          const double gc = g(static_cast<Eigen::Index>(i) * n + j, r);
          if (gc == 0.0) continue;
          const double* u = qv.data() + i * width + r * dim;
          const double* w = kv.data() + j * width + r * dim;
          for (int m = 0; m < half; ++m) {
            const double u0 = u[2 * m], u1 = u[2 * m + 1];
            const double w0 = w[2 * m], w1 = w[2 * m + 1];
            if (need_q) {
              double* gu = gq_base + i * width + r * dim;
              gu[2 * m] += gc * (c[m] * w0 - s[m] * w1);
              gu[2 * m + 1] += gc * (c[m] * w1 + s[m] * w0);
            }
            if (need_k) {
              double* gw = gk_base + j * width + r * dim;
              gw[2 * m] += gc * (c[m] * u0 + s[m] * u1);
              gw[2 * m + 1] += gc * (c[m] * u1 - s[m] * u0);
            }
          }
        }
      }
    }
  });
}

Var Tape::WeightedCrossEntropy(Var logits, std::span<const int> gold,
                               std::span<const double> weights, double scale) {
  const Matrix& z = value(logits);
  if (static_cast<Eigen::Index>(gold.size()) != z.rows()) {
    throw ShapeError("WeightedCrossEntropy: one gold label per row expected");
  }
  if (static_cast<Eigen::Index>(weights.size()) != z.cols()) {
    throw ShapeError("WeightedCrossEntropy: one weight per label expected");
  }
  auto probs = std::make_shared<Matrix>(z.rows(), z.cols());
  auto labels = std::make_shared<std::vector<int>>(gold.begin(), gold.end());
  auto w = std::make_shared<std::vector<double>>(weights.begin(), weights.end());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int y = (*labels)[r];
    if (y < 0 || y >= z.cols()) throw ShapeError("WeightedCrossEntropy: label out of range");
    const double mx = z.row(r).maxCoeff();
    const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
    probs->row(r) = (z.row(r).array() - lse).exp();
    loss -= (*w)[y] * (z(r, y) - lse);
  }
  Matrix out(1, 1);
  out(0, 0) = loss * scale;
  const int id = static_cast<int>(size());
  return Push(std::move(out), Requires(logits), [this, logits, id, probs, labels, w, scale] {
    const double g = nodes_[id].grad(0, 0) * scale;
    Matrix& gz = Grad(logits);
    for (Eigen::Index r = 0; r < gz.rows(); ++r) {
      const int y = (*labels)[r];
      const double f = g * (*w)[y];
      gz.row(r) += f * probs->row(r);
      gz(r, y) -= f;
    }
  });
}

}  // namespace diaasq::ad
