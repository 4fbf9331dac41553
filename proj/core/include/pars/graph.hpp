#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pars/params.hpp"
#include "pars/tensor.hpp"

namespace pars::nn {

class Graph;

// Handle to a node on the tape. Cheap to copy; owned by the Graph.
struct Value {
  Graph* graph = nullptr;
  int index = -1;

  bool valid() const { return graph != nullptr && index >= 0; }
  const Tensor& tensor() const;
  double scalar() const;
};

// Optional recording of softmax attention weights, one matrix per head.
struct AttentionTrace {
  std::vector<Tensor> head_weights;
};

// Eager forward tape with reverse-order backward. Every op appends one node;
// backward walks nodes from the loss down to index 0 in a fixed order, so
// gradient accumulation is bitwise reproducible across runs.
class Graph {
 public:
  explicit Graph(ParameterStore* store = nullptr) : store_(store) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Value constant(Tensor t);
  Value param(const std::string& name);

  // Elementwise and linear algebra.
  Value add(Value a, Value b);
  Value scale(Value a, double s);
  Value matmul(Value a, Value b);
  // y = x * w + b with w laid out [in, out]; pass an invalid Value for no bias.
  Value linear(Value x, Value w, Value b);
  Value layer_norm(Value x, Value gain, Value shift, double eps = 1e-5);
  Value gelu(Value x);
  Value relu(Value x);

  // Multi-head scaled dot-product attention over already-projected q, k, v.
  // q is [n_q, f], k and v are [n_kv, f], f divisible by n_heads. When
  // kv_keep is given, keys with kv_keep[j] == 0 are unreachable (weight 0).
  Value attention(Value q, Value k, Value v, int n_heads,
                  const std::vector<std::uint8_t>* kv_keep = nullptr,
                  AttentionTrace* trace = nullptr);

  // Row plumbing.
  Value gather_rows(Value x, std::vector<int64_t> rows);
  Value scatter_rows(Value x, std::vector<int64_t> dst_rows, int64_t n_rows_out);
  Value scatter_add_row(Value base, Value row, std::vector<int64_t> rows);
  // out[p] = concat(y[pairs[p].first], y[pairs[p].second]) giving [n_pairs, 2f].
  Value pair_concat(Value y, std::vector<std::pair<int64_t, int64_t>> pairs);
  Value mean_rows_range(Value x, int64_t row_begin, int64_t row_end);
  Value mean_rows(Value x);
  Value stack_rows(const std::vector<Value>& rows);

  // Losses and reductions to scalars.
  Value mse_loss(Value pred, const Tensor& target);
  // Mean cross-entropy over the selected rows, weight-normalized when class
  // weights are given: sum(w_y * ce) / sum(w_y). labels[i] belongs to logits
  // row i; active_rows restricts which rows contribute (all rows when null).
  Value softmax_cross_entropy(Value logits, const std::vector<int>& labels,
                              const std::vector<double>* class_weights = nullptr,
                              const std::vector<int64_t>* active_rows = nullptr);
  Value mean_scalars(const std::vector<Value>& xs);

  // Seeds d(loss) = 1 and accumulates into every upstream node; parameter
  // leaf gradients are flushed into the store as the sweep reaches them.
  void backward(Value loss);

  const Tensor& value_of(Value v) const;
  const Tensor& grad_of(Value v) const;
  size_t size() const { return nodes_.size(); }
  ParameterStore* store() const { return store_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    std::function<void()> back;
    std::string param_name;
  };

  Value push(Tensor value);
  Node& node(Value v);
  const Node& node(Value v) const;
  // Zero-initializes the grad buffer on first touch.
  Tensor& grad_buffer(int index);
  void check_same_graph(Value v) const;

  ParameterStore* store_ = nullptr;
  std::vector<Node> nodes_;
};

}  // namespace pars::nn
