#include "dmask/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace dmask {

const Mat& Var::value() const { return tape->value(id); }
const Mat& Var::grad() const { return tape->grad(id); }

Var Tape::leaf(Mat value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

Var Tape::push(Mat value, bool requires_grad, BackFn back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_allocated) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad_allocated = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: node from another tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("backward: loss must be 1x1");
  grad(loss.id)(0, 0) += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.back && n.requires_grad && n.grad_allocated) n.back(*this, n.grad);
  }
}

namespace {

bool wants_grad(std::initializer_list<Var> parents) {
  for (const Var& p : parents)
    if (p.tape->requires_grad(p.id)) return true;
  return false;
}

void accumulate(Tape& t, Var parent, const Mat& g) {
  if (t.requires_grad(parent.id)) t.grad(parent.id) += g;
}

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("op: vars from different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims disagree");
  Mat y = a.value() * b.value();
  return t.push(std::move(y), wants_grad({a, b}), [a, b](Tape& t, const Mat& g) {
    accumulate(t, a, g * t.value(b.id).transpose());
    accumulate(t, b, t.value(a.id).transpose() * g);
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("add: shape mismatch");
  return t.push(a.value() + b.value(), wants_grad({a, b}), [a, b](Tape& t, const Mat& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var add_rowvec(Var a, Var r) {
  check_same_tape(a, r);
  Tape& t = *a.tape;
  if (r.rows() != 1 || r.cols() != a.cols())
    throw std::invalid_argument("add_rowvec: r must be 1xC matching a");
  Mat y = a.value().rowwise() + r.value().row(0);
  return t.push(std::move(y), wants_grad({a, r}), [a, r](Tape& t, const Mat& g) {
    accumulate(t, a, g);
    accumulate(t, r, g.colwise().sum());
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("sub: shape mismatch");
  return t.push(a.value() - b.value(), wants_grad({a, b}), [a, b](Tape& t, const Mat& g) {
    accumulate(t, a, g);
    accumulate(t, b, -g);
  });
}

Var cmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("cmul: shape mismatch");
  Mat y = a.value().cwiseProduct(b.value());
  return t.push(std::move(y), wants_grad({a, b}), [a, b](Tape& t, const Mat& g) {
    accumulate(t, a, g.cwiseProduct(t.value(b.id)));
    accumulate(t, b, g.cwiseProduct(t.value(a.id)));
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  return t.push(a.value() * c, t.requires_grad(a.id), [a, c](Tape& t, const Mat& g) {
    accumulate(t, a, g * c);
  });
}

Var tanh_of(Var a) {
  Tape& t = *a.tape;
  Mat y = a.value().array().tanh();
  const int yid = static_cast<int>(t.size());  // id this push will get
  return t.push(std::move(y), t.requires_grad(a.id), [a, yid](Tape& t, const Mat& g) {
    const Mat& y = t.value(yid);
    accumulate(t, a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var gelu_of(Var a) {
  Tape& t = *a.tape;
  Mat y = a.value().unaryExpr([](double v) { return gelu_scalar(v); });
  return t.push(std::move(y), t.requires_grad(a.id), [a](Tape& t, const Mat& g) {
    const Mat d = t.value(a.id).unaryExpr([](double v) { return gelu_grad_scalar(v); });
    accumulate(t, a, g.cwiseProduct(d));
  });
}

Var transpose_of(Var a) {
  Tape& t = *a.tape;
  return t.push(a.value().transpose(), t.requires_grad(a.id), [a](Tape& t, const Mat& g) {
    accumulate(t, a, g.transpose());
  });
}

Var affine(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

Var slice_rows(Var a, int start, int n) {
  Tape& t = *a.tape;
  if (start < 0 || n < 0 || start + n > a.rows())
    throw std::invalid_argument("slice_rows: out of range");
  Mat y = a.value().middleRows(start, n);
  return t.push(std::move(y), t.requires_grad(a.id), [a, start, n](Tape& t, const Mat& g) {
    if (t.requires_grad(a.id)) t.grad(a.id).middleRows(start, n) += g;
  });
}

Var slice_cols(Var a, int start, int n) {
  Tape& t = *a.tape;
  if (start < 0 || n < 0 || start + n > a.cols())
    throw std::invalid_argument("slice_cols: out of range");
  Mat y = a.value().middleCols(start, n);
  return t.push(std::move(y), t.requires_grad(a.id), [a, start, n](Tape& t, const Mat& g) {
    if (t.requires_grad(a.id)) t.grad(a.id).middleCols(start, n) += g;
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Tape& t = *parts[0].tape;
  Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
    rg = rg || t.requires_grad(p.id);
  }
  Mat y(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    y.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(y), rg, [ps](Tape& t, const Mat& g) {
    Eigen::Index at = 0;
    for (const Var& p : ps) {
      const Eigen::Index c = t.value(p.id).cols();
      accumulate(t, p, g.middleCols(at, c));
      at += c;
    }
  });
}

Var concat_cols(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_cols(std::span<const Var>(parts, 2));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Tape& t = *parts[0].tape;
  Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
    rows += p.rows();
    rg = rg || t.requires_grad(p.id);
  }
  Mat y(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    y.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(y), rg, [ps](Tape& t, const Mat& g) {
    Eigen::Index at = 0;
    for (const Var& p : ps) {
      const Eigen::Index r = t.value(p.id).rows();
      accumulate(t, p, g.middleRows(at, r));
      at += r;
    }
  });
}

Var tile_rows(Var row, int n) {
  Tape& t = *row.tape;
  if (row.rows() != 1) throw std::invalid_argument("tile_rows: input must be 1xC");
  Mat y = row.value().replicate(n, 1);
  return t.push(std::move(y), t.requires_grad(row.id), [row](Tape& t, const Mat& g) {
    accumulate(t, row, g.colwise().sum());
  });
}

Var gather_rows(Var table, std::vector<int> idx) {
  Tape& t = *table.tape;
  Mat y(static_cast<Eigen::Index>(idx.size()), table.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= table.rows())
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[i]) +
                              " outside table of " + std::to_string(table.rows()) + " rows");
    y.row(static_cast<Eigen::Index>(i)) = table.value().row(idx[i]);
  }
  return t.push(std::move(y), t.requires_grad(table.id),
                [table, idx = std::move(idx)](Tape& t, const Mat& g) {
                  if (!t.requires_grad(table.id)) return;
                  Mat& tg = t.grad(table.id);
                  for (size_t i = 0; i < idx.size(); ++i)
                    tg.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                });
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  Mat y(1, 1);
  y(0, 0) = a.value().sum();
  return t.push(std::move(y), t.requires_grad(a.id), [a](Tape& t, const Mat& g) {
    if (t.requires_grad(a.id)) t.grad(a.id).array() += g(0, 0);
  });
}

Var div_by_scalar(Var a, Var s) {
  check_same_tape(a, s);
  Tape& t = *a.tape;
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("div_by_scalar: s must be 1x1");
  const double sv = s.scalar();
  return t.push(a.value() / sv, wants_grad({a, s}), [a, s](Tape& t, const Mat& g) {
    const double sv = t.value(s.id)(0, 0);
    accumulate(t, a, g / sv);
    if (t.requires_grad(s.id))
      t.grad(s.id)(0, 0) += -(g.cwiseProduct(t.value(a.id))).sum() / (sv * sv);
  });
}

Var softmax_rows_of(Var a) {
  Tape& t = *a.tape;
  Mat y = softmax_rows(a.value());
  const int yid = static_cast<int>(t.size());
  // dx_r = y_r .* (g_r - <g_r, y_r>)
  return t.push(std::move(y), t.requires_grad(a.id), [a, yid](Tape& t, const Mat& g) {
    const Mat& y = t.value(yid);
    Mat dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      dx.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    accumulate(t, a, dx);
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  Tape& t = *x.tape;
  const Eigen::Index cols = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != cols || beta.rows() != 1 || beta.cols() != cols)
    throw std::invalid_argument("layer_norm_rows: gamma/beta must be 1xC");
  const Mat& xv = x.value();
  Mat xhat(xv.rows(), cols);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    xhat.row(r) = (xv.row(r).array() - mean) * is;
  }
  Mat y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
          beta.value().row(0).array();
  return t.push(std::move(y), wants_grad({x, gamma, beta}),
                [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Tape& t, const Mat& g) {
                  const Eigen::Index c = xhat.cols();
                  if (t.requires_grad(gamma.id))
                    t.grad(gamma.id) += g.cwiseProduct(xhat).colwise().sum();
                  if (t.requires_grad(beta.id)) t.grad(beta.id) += g.colwise().sum();
                  if (!t.requires_grad(x.id)) return;
                  Mat dx(xhat.rows(), c);
                  const auto gam = t.value(gamma.id).row(0).array();
                  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                    const Eigen::ArrayXXd dxh = g.row(r).array() * gam;
                    const double m1 = dxh.mean();
                    const double m2 = (dxh * xhat.row(r).array()).mean();
                    dx.row(r) =
                        ((dxh - m1 - xhat.row(r).array() * m2) * inv_std(r)).matrix();
                  }
                  t.grad(x.id) += dx;
                });
}

Var cross_entropy_logits(Var logits, int label) {
  Tape& t = *logits.tape;
  if (logits.rows() != 1) throw std::invalid_argument("cross_entropy_logits: logits must be 1xC");
  if (label < 0 || label >= logits.cols())
    throw std::out_of_range("cross_entropy_logits: label " + std::to_string(label) +
                            " outside " + std::to_string(logits.cols()) + " classes");
  const Mat& l = logits.value();
  Mat y(1, 1);
  y(0, 0) = log_sum_exp(l.row(0)) - l(0, label);
  return t.push(std::move(y), t.requires_grad(logits.id), [logits, label](Tape& t, const Mat& g) {
    Mat p = softmax_rows(t.value(logits.id));
    p(0, label) -= 1.0;
    accumulate(t, logits, g(0, 0) * p);
  });
}

Var grad_reverse(Var a) {
  Tape& t = *a.tape;
  return t.push(a.value(), t.requires_grad(a.id), [a](Tape& t, const Mat& g) {
    accumulate(t, a, -g);
  });
}

Var straight_through(const Mat& hard, Var soft) {
  Tape& t = *soft.tape;
  if (hard.rows() != soft.rows() || hard.cols() != soft.cols())
    throw std::invalid_argument("straight_through: shape mismatch");
  return t.push(hard, t.requires_grad(soft.id), [soft](Tape& t, const Mat& g) {
    accumulate(t, soft, g);
  });
}

Var blend_rows(Var e, Var m, Var r) {
  check_same_tape(e, m);
  check_same_tape(e, r);
  Tape& t = *e.tape;
  if (m.cols() != 1 || m.rows() != e.rows())
    throw std::invalid_argument("blend_rows: m must be Nx1 matching e");
  if (r.rows() != 1 || r.cols() != e.cols())
    throw std::invalid_argument("blend_rows: r must be 1xC matching e");
  const Eigen::ArrayXd keep = 1.0 - m.value().col(0).array();
  Mat y = (e.value().array().colwise() * keep).matrix() + (m.value() * r.value());
  return t.push(std::move(y), wants_grad({e, m, r}), [e, m, r](Tape& t, const Mat& g) {
    const Eigen::ArrayXd keep = 1.0 - t.value(m.id).col(0).array();
    if (t.requires_grad(e.id))
      t.grad(e.id) += (g.array().colwise() * keep).matrix();
    if (t.requires_grad(m.id)) {
      const Mat diff = (-t.value(e.id)).rowwise() + t.value(r.id).row(0);
      t.grad(m.id) += g.cwiseProduct(diff).rowwise().sum();
    }
    if (t.requires_grad(r.id))
      t.grad(r.id) += t.value(m.id).transpose() * g;
  });
}

Var dropout_of(Var a, double rate, RngStream& rng) {
  Tape& t = *a.tape;
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  Mat mask(a.rows(), a.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      mask(r, c) = rng.uniform01() < rate ? 0.0 : 1.0 / keep;
  Mat y = a.value().cwiseProduct(mask);
  return t.push(std::move(y), t.requires_grad(a.id),
                [a, mask = std::move(mask)](Tape& t, const Mat& g) {
                  accumulate(t, a, g.cwiseProduct(mask));
                });
}

}  // namespace dmask
