#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sdfas/tensor.hpp"

namespace sdfas {

enum class OpKind : std::uint8_t {
  kInput,
  kParam,
  kDense,
  kConv2d,
  kRelu,
  kAdd,
  kWeightedSum,
  kGlobalAvgPool,
  kDownsample2x2,
  kSoftmaxXent,
};

const char* op_name(OpKind kind);

struct NodeRef {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;

  bool valid() const { return id != kNone; }
  friend bool operator==(NodeRef, NodeRef) = default;
};

struct Node {
  OpKind kind = OpKind::kInput;
  std::string name;
  std::vector<std::size_t> inputs;
  Shape shape;
  int stride = 1;
  std::vector<double> weights;
  std::size_t param = NodeRef::kNone;
  bool needs_grad = false;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Static computation graph with reverse-mode differentiation.
///
/// Nodes are appended in dependency order, so creation order is a valid
/// topological order; shapes are inferred and checked when a node is added.
/// One instance is single-threaded; copies share nothing and may run on
/// separate threads.
class Graph {
 public:
  NodeRef input(std::string name, Shape shape);
  NodeRef param(std::string name, Shape shape);

  NodeRef dense(NodeRef x, NodeRef weight, NodeRef bias, std::string name = {});
  // Zero "same" padding (kernel/2); kernel sizes must be odd.
  NodeRef conv2d(NodeRef x, NodeRef kernel, NodeRef bias, int stride, std::string name = {});
  NodeRef relu(NodeRef x, std::string name = {});
  NodeRef add(NodeRef a, NodeRef b, std::string name = {});
  NodeRef weighted_sum(std::span<const NodeRef> terms, std::span<const double> weights, std::string name = {});
  NodeRef sum(std::span<const NodeRef> terms, std::string name = {});
  NodeRef global_avg_pool(NodeRef x, std::string name = {});
  NodeRef downsample2x2(NodeRef x, std::string name = {});
  // `label` is an input holding the class index as a scalar.
  NodeRef softmax_xent(NodeRef logits, NodeRef label, std::string name = {});

  void set_input(std::string_view name, const Tensor& value);
  void set_input(NodeRef node, const Tensor& value);
  void forward();
  void forward(const std::map<std::string, Tensor>& inputs);

  // Fills parameter gradients with d(loss)/d(param); previous gradients are
  // overwritten. Requires a prior forward().
  void backward(NodeRef loss);

  const Tensor& value(NodeRef node) const;
  const Tensor& value(std::string_view name) const;
  NodeRef find(std::string_view name) const;
  NodeRef at(std::string_view name) const;

  const Node& node(NodeRef ref) const { return nodes_.at(ref.id); }
  std::span<const Node> nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::string describe(std::size_t id) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  std::size_t parameter_scalars() const;
  std::map<std::string, Tensor> gradients() const;

  // mask[i] is true when node i lies upstream of `node` (inclusive).
  std::vector<bool> ancestors(NodeRef node) const;
  bool depends_on(NodeRef node, NodeRef upstream) const;

 private:
  NodeRef push(Node node);
  void check_ref(NodeRef ref, const char* what) const;
  void eval(std::size_t id);
  void backprop(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<Tensor> values_;
  std::vector<Tensor> adjoints_;
  std::vector<bool> input_set_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
  bool evaluated_ = false;
};

// Numerically stable softmax cross-entropy of `logits` against class `label`.
double softmax_xent_value(std::span<const double> logits, std::size_t label);
// Probability of class `cls` under softmax(logits).
double softmax_prob(std::span<const double> logits, std::size_t cls);

}  // namespace sdfas
