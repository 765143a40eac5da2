#include "a2s/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "a2s/error.hpp"

namespace a2s::ad {

void Node::accumulate(const Mat& g) {
  if (grad.size() == 0) grad = g;
  else grad += g;
}

Var::Var(Mat value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var constant(Mat value) { return Var(std::move(value), false); }

Var zeros(Eigen::Index rows, Eigen::Index cols) { return constant(Mat::Zero(rows, cols)); }

namespace {

using Parents = std::vector<std::shared_ptr<Node>>;

Var finish(Mat value, Parents parents, std::function<void(Node&)> fn) {
  const bool req = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  Var out(std::move(value), req);
  if (req) {
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(fn);
  }
  return out;
}

Mat& ensure_grad(Node& n) {
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeError, std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                           std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                           std::to_string(b.cols()));
  }
}

}  // namespace

void backward(const Var& loss) {
  if (!loss.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->accumulate(Mat::Ones(loss.rows(), loss.cols()));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::ShapeError, "matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                                           std::to_string(b.rows()));
  }
  Mat v = a.value() * b.value();
  return finish(std::move(v), {a.node(), b.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate_expr(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate_expr(pa.value.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return finish(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return finish(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate_expr(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return finish(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate_expr(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate_expr(self.grad.cwiseProduct(pa.value));
  });
}

Var add_bias(const Var& x, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) throw Error(ErrorCode::ShapeError, "add_bias: bias shape");
  Mat v = x.value().rowwise() + bias.value().row(0);
  return finish(std::move(v), {x.node(), bias.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate_expr(self.grad.colwise().sum());
  });
}

Var scale(const Var& x, double s) {
  return finish(x.value() * s, {x.node()}, [s](Node& self) { self.parents[0]->accumulate_expr(self.grad * s); });
}

Var sigmoid(const Var& x) {
  Mat v = (1.0 + (-x.value().array()).exp()).inverse().matrix();
  return finish(std::move(v), {x.node()}, [](Node& self) {
    self.parents[0]->accumulate_expr(
        (self.grad.array() * self.value.array() * (1.0 - self.value.array())).matrix());
  });
}

Var tanh(const Var& x) {
  Mat v = x.value().array().tanh().matrix();
  return finish(std::move(v), {x.node()}, [](Node& self) {
    self.parents[0]->accumulate_expr((self.grad.array() * (1.0 - self.value.array().square())).matrix());
  });
}

Var relu(const Var& x) {
  Mat v = x.value().cwiseMax(0.0);
  return finish(std::move(v), {x.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    p.accumulate_expr((self.grad.array() * (p.value.array() > 0.0).cast<double>()).matrix());
  });
}

Var exp(const Var& x) {
  Mat v = x.value().array().exp().matrix();
  return finish(std::move(v), {x.node()}, [](Node& self) {
    self.parents[0]->accumulate_expr(self.grad.cwiseProduct(self.value));
  });
}

Var clamp01(const Var& x) {
  Mat v = x.value().cwiseMax(0.0).cwiseMin(1.0);
  return finish(std::move(v), {x.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    const auto inside = ((p.value.array() >= 0.0) && (p.value.array() <= 1.0)).cast<double>();
    p.accumulate_expr((self.grad.array() * inside).matrix());
  });
}

Var soft_bound(const Var& x, double bound) {
  Mat v = ((x.value().array() / bound).tanh() * bound).matrix();
  return finish(std::move(v), {x.node()}, [bound](Node& self) {
    const auto t = self.value.array() / bound;
    self.parents[0]->accumulate_expr((self.grad.array() * (1.0 - t.square())).matrix());
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeError, "concat_cols: no inputs");
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error(ErrorCode::ShapeError, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat v(rows, cols);
  Parents parents;
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    parents.push_back(p.node());
    widths.push_back(p.cols());
  }
  return finish(std::move(v), std::move(parents), [widths](Node& self) {
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (self.parents[i]->requires_grad) self.parents[i]->accumulate_expr(self.grad.middleCols(off, widths[i]));
      off += widths[i];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeError, "concat_rows: no inputs");
  Eigen::Index cols = parts[0].cols(), rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw Error(ErrorCode::ShapeError, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat v(rows, cols);
  Parents parents;
  std::vector<Eigen::Index> heights;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    parents.push_back(p.node());
    heights.push_back(p.rows());
  }
  return finish(std::move(v), std::move(parents), [heights](Node& self) {
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < heights.size(); ++i) {
      if (self.parents[i]->requires_grad) self.parents[i]->accumulate_expr(self.grad.middleRows(off, heights[i]));
      off += heights[i];
    }
  });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || start + n > x.cols()) throw Error(ErrorCode::ShapeError, "slice_cols: out of range");
  Mat v = x.value().middleCols(start, n);
  return finish(std::move(v), {x.node()}, [start, n](Node& self) {
    ensure_grad(*self.parents[0]).middleCols(start, n) += self.grad;
  });
}

Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || start + n > x.rows()) throw Error(ErrorCode::ShapeError, "slice_rows: out of range");
  Mat v = x.value().middleRows(start, n);
  return finish(std::move(v), {x.node()}, [start, n](Node& self) {
    ensure_grad(*self.parents[0]).middleRows(start, n) += self.grad;
  });
}

Var reshape(const Var& x, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != x.value().size()) throw Error(ErrorCode::ShapeError, "reshape: size mismatch");
  Mat v = Eigen::Map<const Mat>(x.value().data(), rows, cols);
  return finish(std::move(v), {x.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    p.accumulate_expr(Eigen::Map<const Mat>(self.grad.data(), p.value.rows(), p.value.cols()));
  });
}

Var gather_rows(const Var& table, std::span<const int> indices) {
  Mat v(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= table.rows()) throw Error(ErrorCode::ShapeError, "gather_rows: index");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return finish(std::move(v), {table.node()}, [idx = std::move(idx)](Node& self) {
    Mat& g = ensure_grad(*self.parents[0]);
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

Var sum(const Var& x) {
  Mat v(1, 1);
  v(0, 0) = x.value().sum();
  return finish(std::move(v), {x.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    p.accumulate_expr(Mat::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Var add_scalars(std::span<const Var> terms) {
  Mat v = Mat::Zero(1, 1);
  Parents parents;
  for (const auto& t : terms) {
    if (t.rows() != 1 || t.cols() != 1) throw Error(ErrorCode::ShapeError, "add_scalars: non-scalar term");
    v(0, 0) += t.scalar();
    parents.push_back(t.node());
  }
  return finish(std::move(v), std::move(parents), [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

Var gru_cell(const Var& gx, const Var& gh, const Var& h) {
  const Eigen::Index hidden = h.cols();
  if (gx.cols() != 3 * hidden || gh.cols() != 3 * hidden || gx.rows() != h.rows() || gh.rows() != h.rows()) {
    throw Error(ErrorCode::ShapeError, "gru_cell: expected 3*hidden projections");
  }
  const auto& ax = gx.value();
  const auto& ah = gh.value();
  auto sig = [](const auto& e) { return (1.0 + (-e.array()).exp()).inverse().matrix(); };
  Mat r = sig(ax.leftCols(hidden) + ah.leftCols(hidden));
  Mat z = sig(ax.middleCols(hidden, hidden) + ah.middleCols(hidden, hidden));
  Mat n = (ax.rightCols(hidden).array() + r.array() * ah.rightCols(hidden).array()).tanh().matrix();
  Mat out = (n.array() + z.array() * (h.value().array() - n.array())).matrix();
  return finish(std::move(out), {gx.node(), gh.node(), h.node()},
                [r = std::move(r), z = std::move(z), n = std::move(n), hidden](Node& self) {
                  auto& px = *self.parents[0];
                  auto& ph = *self.parents[1];
                  auto& pprev = *self.parents[2];
                  const auto& g = self.grad.array();
                  const Mat dn = (g * (1.0 - z.array())).matrix();
                  const Mat dz = (g * (pprev.value.array() - n.array())).matrix();
                  const Mat dpre_n = (dn.array() * (1.0 - n.array().square())).matrix();
                  const Mat ah_n = ph.value.rightCols(hidden);
                  const Mat dr = dpre_n.cwiseProduct(ah_n);
                  const Mat dpre_r = (dr.array() * r.array() * (1.0 - r.array())).matrix();
                  const Mat dpre_z = (dz.array() * z.array() * (1.0 - z.array())).matrix();
                  if (px.requires_grad) {
                    Mat& gxg = ensure_grad(px);
                    gxg.leftCols(hidden) += dpre_r;
                    gxg.middleCols(hidden, hidden) += dpre_z;
                    gxg.rightCols(hidden) += dpre_n;
                  }
                  if (ph.requires_grad) {
                    Mat& ghg = ensure_grad(ph);
                    ghg.leftCols(hidden) += dpre_r;
                    ghg.middleCols(hidden, hidden) += dpre_z;
                    ghg.rightCols(hidden) += dpre_n.cwiseProduct(r);
                  }
                  if (pprev.requires_grad) pprev.accumulate_expr((g * z.array()).matrix());
                });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw Error(ErrorCode::ShapeError, "softmax_cross_entropy: one target per row required");
  }
  const Mat& x = logits.value();
  Mat probs(x.rows(), x.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int t = targets[i];
    if (t < 0) {
      probs.row(i).setZero();
      continue;
    }
    if (t >= x.cols()) throw Error(ErrorCode::ShapeError, "softmax_cross_entropy: target out of range");
    const double m = x.row(i).maxCoeff();
    const auto e = (x.row(i).array() - m).exp();
    const double s = e.sum();
    probs.row(i) = (e / s).matrix();
    total += m + std::log(s) - x(i, t);
  }
  Mat v(1, 1);
  v(0, 0) = total;
  std::vector<int> tg(targets.begin(), targets.end());
  return finish(std::move(v), {logits.node()}, [probs = std::move(probs), tg = std::move(tg)](Node& self) {
    Mat g = probs;
    for (std::size_t i = 0; i < tg.size(); ++i) {
      if (tg[i] >= 0) g(static_cast<Eigen::Index>(i), tg[i]) -= 1.0;
    }
    self.parents[0]->accumulate_expr(g * self.grad(0, 0));
  });
}

Var bce_with_logits(const Var& logits, const Mat& targets, const Mat& mask) {
  const Mat& x = logits.value();
  if (targets.rows() != x.rows() || targets.cols() != x.cols() ||
      (mask.size() != 0 && (mask.rows() != x.rows() || mask.cols() != x.cols()))) {
    throw Error(ErrorCode::ShapeError, "bce_with_logits: shape mismatch");
  }
  const Mat w = mask.size() ? mask : Mat::Ones(x.rows(), x.cols());
  const auto xa = x.array();
  const Mat per = (xa.max(0.0) - xa * targets.array() + (-xa.abs()).exp().log1p()).matrix();
  Mat v(1, 1);
  v(0, 0) = per.cwiseProduct(w).sum();
  return finish(std::move(v), {logits.node()}, [targets, w](Node& self) {
    auto& p = *self.parents[0];
    const Mat s = (1.0 + (-p.value.array()).exp()).inverse().matrix();
    p.accumulate_expr(((s - targets).cwiseProduct(w)) * self.grad(0, 0));
  });
}

Var squared_error(const Var& pred, const Mat& target) {
  if (target.rows() != pred.rows() || target.cols() != pred.cols()) {
    throw Error(ErrorCode::ShapeError, "squared_error: shape mismatch");
  }
  Mat v(1, 1);
  v(0, 0) = (pred.value() - target).squaredNorm();
  return finish(std::move(v), {pred.node()}, [target](Node& self) {
    auto& p = *self.parents[0];
    p.accumulate_expr((p.value - target) * (2.0 * self.grad(0, 0)));
  });
}

Var kl_standard_normal(const Var& mean, const Var& logvar) {
  check_same_shape(mean, logvar, "kl_standard_normal");
  const auto mu = mean.value().array();
  const auto lv = logvar.value().array();
  Mat v(1, 1);
  v(0, 0) = 0.5 * (mu.square() + lv.exp() - 1.0 - lv).sum();
  return finish(std::move(v), {mean.node(), logvar.node()}, [](Node& self) {
    auto& pm = *self.parents[0];
    auto& pl = *self.parents[1];
    const double g = self.grad(0, 0);
    if (pm.requires_grad) pm.accumulate_expr(pm.value * g);
    if (pl.requires_grad) pl.accumulate_expr(((pl.value.array().exp() - 1.0) * (0.5 * g)).matrix());
  });
}

Var reparameterize(const Var& mean, const Var& logvar, const Mat& noise) {
  check_same_shape(mean, logvar, "reparameterize");
  if (noise.rows() != mean.rows() || noise.cols() != mean.cols()) {
    throw Error(ErrorCode::ShapeError, "reparameterize: noise shape mismatch");
  }
  const Mat sd = (logvar.value().array() * 0.5).exp().matrix();
  Mat v = mean.value() + sd.cwiseProduct(noise);
  return finish(std::move(v), {mean.node(), logvar.node()}, [sd, noise](Node& self) {
    auto& pm = *self.parents[0];
    auto& pl = *self.parents[1];
    if (pm.requires_grad) pm.accumulate(self.grad);
    if (pl.requires_grad) pl.accumulate_expr((self.grad.array() * sd.array() * noise.array() * 0.5).matrix());
  });
}

}  // namespace a2s::ad
