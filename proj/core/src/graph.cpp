#include "pars/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "pars/error.hpp"

namespace pars::nn {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void check_rank2(const Tensor& t, const char* what) {
  if (t.shape().size() != 2) throw InvalidInput(std::string(what) + " must be rank 2");
}

}  // namespace

const Tensor& Value::tensor() const {
  if (!valid()) throw InvalidInput("use of empty graph value");
  return graph->value_of(*this);
}

double Value::scalar() const {
  const Tensor& t = tensor();
  if (t.numel() != 1) throw InvalidInput("value is not a scalar");
  return t[0];
}

Value Graph::push(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), nullptr, std::string()});
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Graph::Node& Graph::node(Value v) {
  check_same_graph(v);
  return nodes_[static_cast<size_t>(v.index)];
}

const Graph::Node& Graph::node(Value v) const {
  check_same_graph(v);
  return nodes_[static_cast<size_t>(v.index)];
}

void Graph::check_same_graph(Value v) const {
  if (v.graph != this || v.index < 0 || v.index >= static_cast<int>(nodes_.size()))
    throw InvalidInput("graph value does not belong to this tape");
}

Tensor& Graph::grad_buffer(int index) {
  Node& n = nodes_[static_cast<size_t>(index)];
  if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

const Tensor& Graph::value_of(Value v) const { return node(v).value; }

const Tensor& Graph::grad_of(Value v) const {
  const Node& n = node(v);
  if (n.grad.numel() == 0) throw InvalidInput("gradient was not computed for this value");
  return n.grad;
}

Value Graph::constant(Tensor t) { return push(std::move(t)); }

Value Graph::param(const std::string& name) {
  if (store_ == nullptr) throw InvalidInput("graph has no parameter store");
  Value v = push(store_->value_as_tensor(name));
  node(v).param_name = name;
  return v;
}

Value Graph::add(Value a, Value b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.shape() != tb.shape()) throw InvalidInput("add: shape mismatch");
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out[i] = ta[i] + tb[i];
  Value v = push(std::move(out));
  int ia = a.index, ib = b.index, iv = v.index;
  node(v).back = [this, ia, ib, iv]() {
    const Tensor& g = nodes_[iv].grad;
    Tensor& ga = grad_buffer(ia);
    Tensor& gb = grad_buffer(ib);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return v;
}

Value Graph::scale(Value a, double s) {
  const Tensor& ta = node(a).value;
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out[i] = ta[i] * s;
  Value v = push(std::move(out));
  int ia = a.index, iv = v.index;
  node(v).back = [this, ia, iv, s]() {
    const Tensor& g = nodes_[iv].grad;
    Tensor& ga = grad_buffer(ia);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
  };
  return v;
}

Value Graph::matmul(Value a, Value b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  check_rank2(ta, "matmul lhs");
  check_rank2(tb, "matmul rhs");
  if (ta.cols() != tb.rows()) throw InvalidInput("matmul: inner dimensions differ");
  const int64_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      const double aip = ta.at(i, p);
      for (int64_t j = 0; j < n; ++j) out.at(i, j) += aip * tb.at(p, j);
    }
  Value v = push(std::move(out));
  int ia = a.index, ib = b.index, iv = v.index;
  node(v).back = [this, ia, ib, iv, m, k, n]() {
    const Tensor& g = nodes_[iv].grad;
    const Tensor& ta = nodes_[ia].value;
    const Tensor& tb = nodes_[ib].value;
    Tensor& ga = grad_buffer(ia);
    Tensor& gb = grad_buffer(ib);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        const double gij = g.at(i, j);
        for (int64_t p = 0; p < k; ++p) {
          ga.at(i, p) += gij * tb.at(p, j);
          gb.at(p, j) += ta.at(i, p) * gij;
        }
      }
  };
  return v;
}

Value Graph::linear(Value x, Value w, Value b) {
  const Tensor& tx = node(x).value;
  const Tensor& tw = node(w).value;
  check_rank2(tx, "linear input");
  check_rank2(tw, "linear weight");
  if (tx.cols() != tw.rows()) throw InvalidInput("linear: input and weight dimensions differ");
  const int64_t n = tx.rows(), in = tx.cols(), out_dim = tw.cols();
  const bool has_bias = b.valid();
  if (has_bias && node(b).value.numel() != out_dim)
    throw InvalidInput("linear: bias length differs from output width");
  Tensor out = Tensor::zeros({n, out_dim});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t p = 0; p < in; ++p) {
      const double xip = tx.at(i, p);
      for (int64_t j = 0; j < out_dim; ++j) out.at(i, j) += xip * tw.at(p, j);
    }
    if (has_bias) {
      const Tensor& tb = node(b).value;
      for (int64_t j = 0; j < out_dim; ++j) out.at(i, j) += tb[j];
    }
  }
  Value v = push(std::move(out));
  int ix = x.index, iw = w.index, ib = has_bias ? b.index : -1, iv = v.index;
  node(v).back = [this, ix, iw, ib, iv, n, in, out_dim]() {
    const Tensor& g = nodes_[iv].grad;
    const Tensor& tx = nodes_[ix].value;
    const Tensor& tw = nodes_[iw].value;
    Tensor& gx = grad_buffer(ix);
    Tensor& gw = grad_buffer(iw);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < out_dim; ++j) {
        const double gij = g.at(i, j);
        for (int64_t p = 0; p < in; ++p) {
          gx.at(i, p) += gij * tw.at(p, j);
          gw.at(p, j) += tx.at(i, p) * gij;
        }
      }
    if (ib >= 0) {
      Tensor& gb = grad_buffer(ib);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < out_dim; ++j) gb[j] += g.at(i, j);
    }
  };
  return v;
}

Value Graph::layer_norm(Value x, Value gain, Value shift, double eps) {
  const Tensor& tx = node(x).value;
  check_rank2(tx, "layer_norm input");
  const int64_t n = tx.rows(), f = tx.cols();
  if (node(gain).value.numel() != f || node(shift).value.numel() != f)
    throw InvalidInput("layer_norm: gain and shift must match feature width");
  auto xhat = std::make_shared<Tensor>(Tensor::zeros({n, f}));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  Tensor out = Tensor::zeros({n, f});
  const Tensor& tg = node(gain).value;
  const Tensor& tb = node(shift).value;
  for (int64_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int64_t j = 0; j < f; ++j) mean += tx.at(i, j);
    mean /= static_cast<double>(f);
    double var = 0.0;
    for (int64_t j = 0; j < f; ++j) {
      const double d = tx.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(f);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(i)] = inv;
    for (int64_t j = 0; j < f; ++j) {
      const double h = (tx.at(i, j) - mean) * inv;
      xhat->at(i, j) = h;
      out.at(i, j) = tg[j] * h + tb[j];
    }
  }
  Value v = push(std::move(out));
  int ix = x.index, ig = gain.index, ib = shift.index, iv = v.index;
  node(v).back = [this, ix, ig, ib, iv, n, f, xhat, inv_std]() {
    const Tensor& g = nodes_[iv].grad;
    const Tensor& tg = nodes_[ig].value;
    Tensor& gx = grad_buffer(ix);
    Tensor& gg = grad_buffer(ig);
    Tensor& gb = grad_buffer(ib);
    for (int64_t i = 0; i < n; ++i) {
      double mean_dh = 0.0, mean_dh_xhat = 0.0;
      for (int64_t j = 0; j < f; ++j) {
        const double dh = g.at(i, j) * tg[j];
        mean_dh += dh;
        mean_dh_xhat += dh * xhat->at(i, j);
      }
      mean_dh /= static_cast<double>(f);
      mean_dh_xhat /= static_cast<double>(f);
      const double inv = (*inv_std)[static_cast<size_t>(i)];
      for (int64_t j = 0; j < f; ++j) {
        const double dh = g.at(i, j) * tg[j];
        gx.at(i, j) += inv * (dh - mean_dh - xhat->at(i, j) * mean_dh_xhat);
        gg[j] += g.at(i, j) * xhat->at(i, j);
        gb[j] += g.at(i, j);
      }
    }
  };
  return v;
}

Value Graph::gelu(Value x) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (int64_t i = 0; i < tx.numel(); ++i) {
    const double xi = tx[i];
    out[i] = 0.5 * xi * (1.0 + std::erf(xi * kInvSqrt2));
  }
  Value v = push(std::move(out));
  int ix = x.index, iv = v.index;
  node(v).back = [this, ix, iv]() {
    const Tensor& g = nodes_[iv].grad;
    const Tensor& tx = nodes_[ix].value;
    Tensor& gx = grad_buffer(ix);
    for (int64_t i = 0; i < tx.numel(); ++i) {
      const double xi = tx[i];
      const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
      gx[i] += g[i] * (cdf + xi * pdf);
    }
  };
  return v;
}

Value Graph::relu(Value x) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (int64_t i = 0; i < tx.numel(); ++i) out[i] = tx[i] > 0.0 ? tx[i] : 0.0;
  Value v = push(std::move(out));
  int ix = x.index, iv = v.index;
  node(v).back = [this, ix, iv]() {
    const Tensor& g = nodes_[iv].grad;
    const Tensor& tx = nodes_[ix].value;
    Tensor& gx = grad_buffer(ix);
    for (int64_t i = 0; i < tx.numel(); ++i)
      if (tx[i] > 0.0) gx[i] += g[i];
  };
  return v;
}

Value Graph::attention(Value q, Value k, Value v, int n_heads,
                       const std::vector<std::uint8_t>* kv_keep, AttentionTrace* trace) {
  const Tensor& tq = node(q).value;
  const Tensor& tk = node(k).value;
  const Tensor& tv = node(v).value;
  check_rank2(tq, "attention q");
  check_rank2(tk, "attention k");
  check_rank2(tv, "attention v");
  const int64_t nq = tq.rows(), nk = tk.rows(), f = tq.cols();
  if (tk.cols() != f || tv.cols() != f || tv.rows() != nk)
    throw InvalidInput("attention: q, k, v widths or key/value counts differ");
  if (n_heads <= 0 || f % n_heads != 0)
    throw InvalidInput("attention: feature width not divisible by head count");
  if (kv_keep != nullptr) {
    if (static_cast<int64_t>(kv_keep->size()) != nk)
      throw InvalidInput("attention: kv_keep length differs from key count");
    bool any = false;
    for (std::uint8_t m : *kv_keep) any = any || (m != 0);
    if (!any) throw InvalidInput("attention: kv_keep removes every key");
  }
  const int64_t d = f / n_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(d));

  auto weights = std::make_shared<std::vector<Tensor>>();
  weights->reserve(static_cast<size_t>(n_heads));
  Tensor out = Tensor::zeros({nq, f});
  for (int h = 0; h < n_heads; ++h) {
    const int64_t c0 = static_cast<int64_t>(h) * d;
    Tensor a = Tensor::zeros({nq, nk});
    for (int64_t i = 0; i < nq; ++i) {
      double row_max = -1e300;
      for (int64_t j = 0; j < nk; ++j) {
        if (kv_keep != nullptr && (*kv_keep)[static_cast<size_t>(j)] == 0) {
          a.at(i, j) = -1e300;
          continue;
        }
        double s = 0.0;
        for (int64_t p = 0; p < d; ++p) s += tq.at(i, c0 + p) * tk.at(j, c0 + p);
        s *= att_scale;
        a.at(i, j) = s;
        row_max = std::max(row_max, s);
      }
      double denom = 0.0;
      for (int64_t j = 0; j < nk; ++j) {
        const double e = std::exp(a.at(i, j) - row_max);
        a.at(i, j) = e;
        denom += e;
      }
      for (int64_t j = 0; j < nk; ++j) a.at(i, j) /= denom;
      for (int64_t j = 0; j < nk; ++j) {
        const double aij = a.at(i, j);
        if (aij == 0.0) continue;
        for (int64_t p = 0; p < d; ++p) out.at(i, c0 + p) += aij * tv.at(j, c0 + p);
      }
    }
    weights->push_back(std::move(a));
  }
  if (trace != nullptr) trace->head_weights = *weights;

  Value r = push(std::move(out));
  int iq = q.index, ik = k.index, ivv = v.index, ir = r.index;
  node(r).back = [this, iq, ik, ivv, ir, nq, nk, d, n_heads, att_scale, weights]() {
    const Tensor& g = nodes_[ir].grad;
    const Tensor& tq = nodes_[iq].value;
    const Tensor& tk = nodes_[ik].value;
    const Tensor& tv = nodes_[ivv].value;
    Tensor& gq = grad_buffer(iq);
    Tensor& gk = grad_buffer(ik);
    Tensor& gv = grad_buffer(ivv);
    for (int h = 0; h < n_heads; ++h) {
      const int64_t c0 = static_cast<int64_t>(h) * d;
      const Tensor& a = (*weights)[static_cast<size_t>(h)];
      for (int64_t i = 0; i < nq; ++i) {
        // da = dO V^T, then ds = A o (da - rowdot(da, A)).
        std::vector<double> da(static_cast<size_t>(nk), 0.0);
        for (int64_t j = 0; j < nk; ++j) {
          double acc = 0.0;
          for (int64_t p = 0; p < d; ++p) acc += g.at(i, c0 + p) * tv.at(j, c0 + p);
          da[static_cast<size_t>(j)] = acc;
        }
        double rowdot = 0.0;
        for (int64_t j = 0; j < nk; ++j) rowdot += da[static_cast<size_t>(j)] * a.at(i, j);
        for (int64_t j = 0; j < nk; ++j) {
          const double aij = a.at(i, j);
          if (aij == 0.0) continue;
          const double ds = aij * (da[static_cast<size_t>(j)] - rowdot) * att_scale;
          for (int64_t p = 0; p < d; ++p) {
            gq.at(i, c0 + p) += ds * tk.at(j, c0 + p);
            gk.at(j, c0 + p) += ds * tq.at(i, c0 + p);
          }
          for (int64_t p = 0; p < d; ++p) gv.at(j, c0 + p) += aij * g.at(i, c0 + p);
        }
      }
    }
  };
  return r;
}

Value Graph::gather_rows(Value x, std::vector<int64_t> rows) {
  const Tensor& tx = node(x).value;
  check_rank2(tx, "gather_rows input");
  const int64_t f = tx.cols();
  for (int64_t r : rows)
    if (r < 0 || r >= tx.rows()) throw InvalidInput("gather_rows: row index out of range");
  Tensor out = Tensor::zeros({static_cast<int64_t>(rows.size()), f});
  for (size_t i = 0; i < rows.size(); ++i)
    for (int64_t j = 0; j < f; ++j) out.at(static_cast<int64_t>(i), j) = tx.at(rows[i], j);
  Value v = push(std::move(out));
  int ix = x.index, iv = v.index;
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(rows));
  node(v).back = [this, ix, iv, idx, f]() {
    const Tensor& g = nodes_[iv].grad;
    Tensor& gx = grad_buffer(ix);
    for (size_t i = 0; i < idx->size(); ++i)
      for (int64_t j = 0; j < f; ++j) gx.at((*idx)[i], j) += g.at(static_cast<int64_t>(i), j);
  };
  return v;
}

Value Graph::scatter_rows(Value x, std::vector<int64_t> dst_rows, int64_t n_rows_out) {
  const Tensor& tx = node(x).value;
  check_rank2(tx, "scatter_rows input");
  if (static_cast<int64_t>(dst_rows.size()) != tx.rows())
    throw InvalidInput("scatter_rows: one destination per input row required");
  std::vector<std::uint8_t> seen(static_cast<size_t>(n_rows_out), 0);
  for (int64_t r : dst_rows) {
    if (r < 0 || r >= n_rows_out) throw InvalidInput("scatter_rows: destination out of range");
    if (seen[static_cast<size_t>(r)]) throw InvalidInput("scatter_rows: duplicate destination");
    seen[static_cast<size_t>(r)] = 1;
  }
  const int64_t f = tx.cols();
  Tensor out = Tensor::zeros({n_rows_out, f});
  for (size_t i = 0; i < dst_rows.size(); ++i)
    for (int64_t j = 0; j < f; ++j) out.at(dst_rows[i], j) = tx.at(static_cast<int64_t>(i), j);
  Value v = push(std::move(out));
  int ix = x.index, iv = v.index;
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(dst_rows));
  node(v).back = [this, ix, iv, idx, f]() {
    const Tensor& g = nodes_[iv].grad;
    Tensor& gx = grad_buffer(ix);
    for (size_t i = 0; i < idx->size(); ++i)
      for (int64_t j = 0; j < f; ++j) gx.at(static_cast<int64_t>(i), j) += g.at((*idx)[i], j);
  };
  return v;
}

Value Graph::scatter_add_row(Value base, Value row, std::vector<int64_t> rows) {
  const Tensor& tb = node(base).value;
  const Tensor& tr = node(row).value;
  check_rank2(tb, "scatter_add_row base");
  const int64_t f = tb.cols();
  if (tr.numel() != f) throw InvalidInput("scatter_add_row: row length differs from base width");
  for (int64_t r : rows)
    if (r < 0 || r >= tb.rows()) throw InvalidInput("scatter_add_row: row index out of range");
  Tensor out = tb;
  for (int64_t r : rows)
    for (int64_t j = 0; j < f; ++j) out.at(r, j) += tr[j];
  Value v = push(std::move(out));
  int ib = base.index, ir = row.index, iv = v.index;
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(rows));
  node(v).back = [this, ib, ir, iv, idx, f]() {
    const Tensor& g = nodes_[iv].grad;
    Tensor& gb = grad_buffer(ib);
    Tensor& gr = grad_buffer(ir);
    for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
    for (int64_t r : *idx)
      for (int64_t j = 0; j < f; ++j) gr[j] += g.at(r, j);
  };
  return v;
}

Value Graph::pair_concat(Value y, std::vector<std::pair<int64_t, int64_t>> pairs) {
  const Tensor& ty = node(y).value;
  check_rank2(ty, "pair_concat input");
  const int64_t f = ty.cols();
  for (const auto& [j, k] : pairs)
    if (j < 0 || j >= ty.rows() || k < 0 || k >= ty.rows())
      throw InvalidInput("pair_concat: pair index out of range");
  Tensor out = Tensor::zeros({static_cast<int64_t>(pairs.size()), 2 * f});
  for (size_t p = 0; p < pairs.size(); ++p) {
    const auto [j, k] = pairs[p];
    for (int64_t c = 0; c < f; ++c) {
      out.at(static_cast<int64_t>(p), c) = ty.at(j, c);
      out.at(static_cast<int64_t>(p), f + c) = ty.at(k, c);
    }
  }
  Value v = push(std::move(out));
  int iy = y.index, iv = v.index;
  auto saved = std::make_shared<std::vector<std::pair<int64_t, int64_t>>>(std::move(pairs));
  node(v).back = [this, iy, iv, saved, f]() {
    const Tensor& g = nodes_[iv].grad;
    Tensor& gy = grad_buffer(iy);
    for (size_t p = 0; p < saved->size(); ++p) {
      const auto [j, k] = (*saved)[p];
      for (int64_t c = 0; c < f; ++c) {
        gy.at(j, c) += g.at(static_cast<int64_t>(p), c);
        gy.at(k, c) += g.at(static_cast<int64_t>(p), f + c);
      }
    }
  };
  return v;
}

Value Graph::mean_rows_range(Value x, int64_t row_begin, int64_t row_end) {
  const Tensor& tx = node(x).value;
  check_rank2(tx, "mean_rows input");
  if (row_begin < 0 || row_end > tx.rows() || row_begin >= row_end)
    throw InvalidInput("mean_rows_range: bad row range");
  const int64_t f = tx.cols();
  const int64_t count = row_end - row_begin;
  Tensor out = Tensor::zeros({1, f});
  for (int64_t i = row_begin; i < row_end; ++i)
    for (int64_t j = 0; j < f; ++j) out.at(0, j) += tx.at(i, j);
  for (int64_t j = 0; j < f; ++j) out.at(0, j) /= static_cast<double>(count);
  Value v = push(std::move(out));
  int ix = x.index, iv = v.index;
  node(v).back = [this, ix, iv, row_begin, row_end, f, count]() {
    const Tensor& g = nodes_[iv].grad;
    Tensor& gx = grad_buffer(ix);
    for (int64_t i = row_begin; i < row_end; ++i)
      for (int64_t j = 0; j < f; ++j) gx.at(i, j) += g.at(0, j) / static_cast<double>(count);
  };
  return v;
}

Value Graph::mean_rows(Value x) { return mean_rows_range(x, 0, node(x).value.rows()); }

Value Graph::stack_rows(const std::vector<Value>& rows) {
  if (rows.empty()) throw InvalidInput("stack_rows: no rows");
  const int64_t f = node(rows[0]).value.cols();
  for (Value r : rows) {
    const Tensor& t = node(r).value;
    check_rank2(t, "stack_rows input");
    if (t.rows() != 1 || t.cols() != f) throw InvalidInput("stack_rows: every input must be [1, f]");
  }
  Tensor out = Tensor::zeros({static_cast<int64_t>(rows.size()), f});
  for (size_t i = 0; i < rows.size(); ++i)
    for (int64_t j = 0; j < f; ++j) out.at(static_cast<int64_t>(i), j) = node(rows[i]).value.at(0, j);
  Value v = push(std::move(out));
  std::vector<int> indices;
  indices.reserve(rows.size());
  for (Value r : rows) indices.push_back(r.index);
  int iv = v.index;
  auto idx = std::make_shared<std::vector<int>>(std::move(indices));
  node(v).back = [this, iv, idx, f]() {
    const Tensor& g = nodes_[iv].grad;
    for (size_t i = 0; i < idx->size(); ++i) {
      Tensor& gi = grad_buffer((*idx)[i]);
      for (int64_t j = 0; j < f; ++j) gi.at(0, j) += g.at(static_cast<int64_t>(i), j);
    }
  };
  return v;
}

Value Graph::mse_loss(Value pred, const Tensor& target) {
  const Tensor& tp = node(pred).value;
  if (tp.shape() != target.shape()) throw InvalidInput("mse_loss: prediction and target shapes differ");
  const int64_t n = tp.numel();
  if (n == 0) throw InvalidInput("mse_loss: empty prediction");
  auto diff = std::make_shared<Tensor>(tp.shape());
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = tp[i] - target[i];
    (*diff)[i] = d;
    acc += d * d;
  }
  Tensor out({1});
  out[0] = acc / static_cast<double>(n);
  Value v = push(std::move(out));
  int ip = pred.index, iv = v.index;
  node(v).back = [this, ip, iv, diff, n]() {
    const double g = nodes_[iv].grad[0];
    Tensor& gp = grad_buffer(ip);
    const double c = 2.0 * g / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) gp[i] += c * (*diff)[i];
  };
  return v;
}

Value Graph::softmax_cross_entropy(Value logits, const std::vector<int>& labels,
                                   const std::vector<double>* class_weights,
                                   const std::vector<int64_t>* active_rows) {
  const Tensor& tl = node(logits).value;
  check_rank2(tl, "softmax_cross_entropy logits");
  const int64_t rows = tl.rows(), classes = tl.cols();
  if (static_cast<int64_t>(labels.size()) != rows)
    throw InvalidInput("softmax_cross_entropy: one label per logits row required");
  std::vector<int64_t> active;
  if (active_rows != nullptr) {
    active = *active_rows;
    for (int64_t r : active)
      if (r < 0 || r >= rows) throw InvalidInput("softmax_cross_entropy: active row out of range");
  } else {
    active.resize(static_cast<size_t>(rows));
    for (int64_t i = 0; i < rows; ++i) active[static_cast<size_t>(i)] = i;
  }
  if (active.empty()) throw InvalidInput("softmax_cross_entropy: no active rows");
  for (int64_t r : active) {
    const int y = labels[static_cast<size_t>(r)];
    if (y < 0 || y >= classes) throw InvalidInput("softmax_cross_entropy: label out of range");
  }

  auto probs = std::make_shared<Tensor>(Tensor::zeros({static_cast<int64_t>(active.size()), classes}));
  auto row_weight = std::make_shared<std::vector<double>>(active.size(), 1.0);
  double weight_sum = 0.0;
  double loss = 0.0;
  for (size_t a = 0; a < active.size(); ++a) {
    const int64_t r = active[a];
    double row_max = tl.at(r, 0);
    for (int64_t j = 1; j < classes; ++j) row_max = std::max(row_max, tl.at(r, j));
    double denom = 0.0;
    for (int64_t j = 0; j < classes; ++j) denom += std::exp(tl.at(r, j) - row_max);
    const double log_denom = std::log(denom) + row_max;
    for (int64_t j = 0; j < classes; ++j)
      probs->at(static_cast<int64_t>(a), j) = std::exp(tl.at(r, j) - log_denom);
    const int y = labels[static_cast<size_t>(r)];
    double w = 1.0;
    if (class_weights != nullptr) {
      if (static_cast<int64_t>(class_weights->size()) != classes)
        throw InvalidInput("softmax_cross_entropy: one weight per class required");
      w = (*class_weights)[static_cast<size_t>(y)];
    }
    (*row_weight)[a] = w;
    weight_sum += w;
    loss += w * (log_denom - tl.at(r, y));
  }
  if (weight_sum <= 0.0) throw InvalidInput("softmax_cross_entropy: class weights sum to zero");
  Tensor out({1});
  out[0] = loss / weight_sum;

  Value v = push(std::move(out));
  int il = logits.index, iv = v.index;
  auto act = std::make_shared<std::vector<int64_t>>(std::move(active));
  auto labs = std::make_shared<std::vector<int>>(labels);
  node(v).back = [this, il, iv, act, labs, probs, row_weight, weight_sum, classes]() {
    const double g = nodes_[iv].grad[0];
    Tensor& gl = grad_buffer(il);
    for (size_t a = 0; a < act->size(); ++a) {
      const int64_t r = (*act)[a];
      const int y = (*labs)[static_cast<size_t>(r)];
      const double c = g * (*row_weight)[a] / weight_sum;
      for (int64_t j = 0; j < classes; ++j) {
        double p = probs->at(static_cast<int64_t>(a), j);
        if (j == y) p -= 1.0;
        gl.at(r, j) += c * p;
      }
    }
  };
  return v;
}

Value Graph::mean_scalars(const std::vector<Value>& xs) {
  if (xs.empty()) throw InvalidInput("mean_scalars: no inputs");
  double acc = 0.0;
  for (Value x : xs) {
    if (node(x).value.numel() != 1) throw InvalidInput("mean_scalars: inputs must be scalars");
    acc += node(x).value[0];
  }
  Tensor out({1});
  out[0] = acc / static_cast<double>(xs.size());
  Value v = push(std::move(out));
  std::vector<int> indices;
  indices.reserve(xs.size());
  for (Value x : xs) indices.push_back(x.index);
  int iv = v.index;
  auto idx = std::make_shared<std::vector<int>>(std::move(indices));
  node(v).back = [this, iv, idx]() {
    const double g = nodes_[iv].grad[0] / static_cast<double>(idx->size());
    for (int i : *idx) grad_buffer(i)[0] += g;
  };
  return v;
}

void Graph::backward(Value loss) {
  check_same_graph(loss);
  if (node(loss).value.numel() != 1) throw InvalidInput("backward: loss must be a scalar");
  grad_buffer(loss.index)[0] = 1.0;
  for (int i = loss.index; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad.numel() == 0) continue;  // nothing flowed into this node
    if (n.back) n.back();
    if (!n.param_name.empty() && store_ != nullptr) store_->add_grad(n.param_name, n.grad);
  }
}

}  // namespace pars::nn
