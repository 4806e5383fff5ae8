#include "sdfas/graph.hpp"

#include <algorithm>
#include <cmath>

#include "sdfas/errors.hpp"

namespace sdfas {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kDense: return "dense";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kAdd: return "add";
    case OpKind::kWeightedSum: return "weighted_sum";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kDownsample2x2: return "downsample2x2";
    case OpKind::kSoftmaxXent: return "softmax_xent";
  }
  return "?";
}

double softmax_xent_value(std::span<const double> logits, std::size_t label) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return (m + std::log(z)) - logits[label];
}

double softmax_prob(std::span<const double> logits, std::size_t cls) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return std::exp(logits[cls] - m) / z;
}

std::string Graph::describe(std::size_t id) const {
  const Node& n = nodes_.at(id);
  std::string s = std::string(op_name(n.kind)) + " node #" + std::to_string(id);
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s;
}

void Graph::check_ref(NodeRef ref, const char* what) const {
  if (!ref.valid() || ref.id >= nodes_.size()) {
    throw ShapeError(std::string("invalid node reference for ") + what);
  }
}

NodeRef Graph::push(Node node) {
  if (!node.name.empty()) {
    auto [it, inserted] = by_name_.emplace(node.name, nodes_.size());
    if (!inserted) throw ShapeError("duplicate node name '" + node.name + "'");
  }
  for (auto in : node.inputs) node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
  values_.emplace_back(node.shape);
  adjoints_.emplace_back(node.needs_grad ? Tensor(node.shape) : Tensor());
  input_set_.push_back(node.kind != OpKind::kInput);
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return NodeRef{nodes_.size() - 1};
}

NodeRef Graph::input(std::string name, Shape shape) {
  if (name.empty()) throw ShapeError("graph inputs must be named");
  Node n;
  n.kind = OpKind::kInput;
  n.name = std::move(name);
  n.shape = std::move(shape);
  return push(std::move(n));
}

NodeRef Graph::param(std::string name, Shape shape) {
  if (name.empty()) throw ShapeError("parameters must be named");
  Node n;
  n.kind = OpKind::kParam;
  n.name = name;
  n.shape = shape;
  n.needs_grad = true;
  n.param = params_.size();
  params_.push_back(Parameter{name, Tensor(shape), Tensor(shape)});
  return push(std::move(n));
}

NodeRef Graph::dense(NodeRef x, NodeRef weight, NodeRef bias, std::string name) {
  check_ref(x, "dense input");
  check_ref(weight, "dense weight");
  check_ref(bias, "dense bias");
  const Shape& xs = nodes_[x.id].shape;
  const Shape& ws = nodes_[weight.id].shape;
  const Shape& bs = nodes_[bias.id].shape;
  // A rank-1 weight is a single-row map producing a scalar.
  const bool row = ws.size() == 1;
  const bool ok = xs.size() == 1 && ((row && ws[0] == xs[0] && shape_size(bs) == 1) ||
                                     (ws.size() == 2 && ws[1] == xs[0] && bs.size() == 1 && bs[0] == ws[0]));
  if (!ok) {
    throw ShapeError("dense '" + name + "': input " + shape_str(xs) + ", weight " + shape_str(ws) +
                     ", bias " + shape_str(bs));
  }
  Node n;
  n.kind = OpKind::kDense;
  n.name = std::move(name);
  n.inputs = {x.id, weight.id, bias.id};
  n.shape = row ? Shape{} : Shape{ws[0]};
  return push(std::move(n));
}

NodeRef Graph::conv2d(NodeRef x, NodeRef kernel, NodeRef bias, int stride, std::string name) {
  check_ref(x, "conv2d input");
  check_ref(kernel, "conv2d kernel");
  check_ref(bias, "conv2d bias");
  const Shape& xs = nodes_[x.id].shape;
  const Shape& ks = nodes_[kernel.id].shape;
  const Shape& bs = nodes_[bias.id].shape;
  if (xs.size() != 3 || ks.size() != 4 || bs.size() != 1 || ks[1] != xs[0] || bs[0] != ks[0] ||
      ks[2] != ks[3]) {
    throw ShapeError("conv2d '" + name + "': input " + shape_str(xs) + ", kernel " + shape_str(ks) +
                     ", bias " + shape_str(bs));
  }
  if (ks[2] % 2 == 0) throw ShapeError("conv2d '" + name + "': kernel size must be odd");
  if (stride < 1) throw ShapeError("conv2d '" + name + "': stride must be positive");
  const std::size_t pad = ks[2] / 2;
  const auto out_dim = [&](std::size_t d) { return (d + 2 * pad - ks[2]) / stride + 1; };
  Node n;
  n.kind = OpKind::kConv2d;
  n.name = std::move(name);
  n.inputs = {x.id, kernel.id, bias.id};
  n.stride = stride;
  n.shape = {ks[0], out_dim(xs[1]), out_dim(xs[2])};
  return push(std::move(n));
}

NodeRef Graph::relu(NodeRef x, std::string name) {
  check_ref(x, "relu input");
  Node n;
  n.kind = OpKind::kRelu;
  n.name = std::move(name);
  n.inputs = {x.id};
  n.shape = nodes_[x.id].shape;
  return push(std::move(n));
}

NodeRef Graph::add(NodeRef a, NodeRef b, std::string name) {
  check_ref(a, "add lhs");
  check_ref(b, "add rhs");
  if (nodes_[a.id].shape != nodes_[b.id].shape) {
    throw ShapeError("add '" + name + "': " + describe(a.id) + " " + shape_str(nodes_[a.id].shape) + " vs " +
                     describe(b.id) + " " + shape_str(nodes_[b.id].shape));
  }
  Node n;
  n.kind = OpKind::kAdd;
  n.name = std::move(name);
  n.inputs = {a.id, b.id};
  n.shape = nodes_[a.id].shape;
  return push(std::move(n));
}

NodeRef Graph::weighted_sum(std::span<const NodeRef> terms, std::span<const double> weights, std::string name) {
  if (terms.empty() || terms.size() != weights.size()) {
    throw ShapeError("weighted_sum '" + name + "': need one weight per term and at least one term");
  }
  Node n;
  n.kind = OpKind::kWeightedSum;
  n.name = std::move(name);
  for (auto t : terms) {
    check_ref(t, "weighted_sum term");
    if (nodes_[t.id].shape != nodes_[terms[0].id].shape) {
      throw ShapeError("weighted_sum '" + n.name + "': " + describe(t.id) + " has shape " +
                       shape_str(nodes_[t.id].shape) + ", expected " + shape_str(nodes_[terms[0].id].shape));
    }
    n.inputs.push_back(t.id);
  }
  n.weights.assign(weights.begin(), weights.end());
  n.shape = nodes_[terms[0].id].shape;
  return push(std::move(n));
}

NodeRef Graph::sum(std::span<const NodeRef> terms, std::string name) {
  std::vector<double> ones(terms.size(), 1.0);
  return weighted_sum(terms, ones, std::move(name));
}

NodeRef Graph::global_avg_pool(NodeRef x, std::string name) {
  check_ref(x, "global_avg_pool input");
  const Shape& xs = nodes_[x.id].shape;
  if (xs.size() != 3) throw ShapeError("global_avg_pool '" + name + "': input " + shape_str(xs));
  Node n;
  n.kind = OpKind::kGlobalAvgPool;
  n.name = std::move(name);
  n.inputs = {x.id};
  n.shape = {xs[0]};
  return push(std::move(n));
}

NodeRef Graph::downsample2x2(NodeRef x, std::string name) {
  check_ref(x, "downsample2x2 input");
  const Shape& xs = nodes_[x.id].shape;
  if (xs.size() != 3) throw ShapeError("downsample2x2 '" + name + "': input " + shape_str(xs));
  Node n;
  n.kind = OpKind::kDownsample2x2;
  n.name = std::move(name);
  n.inputs = {x.id};
  n.shape = {xs[0], (xs[1] + 1) / 2, (xs[2] + 1) / 2};
  return push(std::move(n));
}

NodeRef Graph::softmax_xent(NodeRef logits, NodeRef label, std::string name) {
  check_ref(logits, "softmax_xent logits");
  check_ref(label, "softmax_xent label");
  if (nodes_[logits.id].shape.size() != 1 || nodes_[logits.id].shape[0] < 2) {
    throw ShapeError("softmax_xent '" + name + "': logits " + shape_str(nodes_[logits.id].shape));
  }
  if (nodes_[label.id].kind != OpKind::kInput || shape_size(nodes_[label.id].shape) != 1) {
    throw ShapeError("softmax_xent '" + name + "': label must be a scalar input");
  }
  Node n;
  n.kind = OpKind::kSoftmaxXent;
  n.name = std::move(name);
  n.inputs = {logits.id, label.id};
  n.shape = {};
  return push(std::move(n));
}

void Graph::set_input(std::string_view name, const Tensor& value) { set_input(at(name), value); }

void Graph::set_input(NodeRef node, const Tensor& value) {
  check_ref(node, "set_input");
  const Node& n = nodes_[node.id];
  if (n.kind != OpKind::kInput) throw ShapeError(describe(node.id) + " is not an input");
  if (value.shape() != n.shape) {
    throw ShapeError(describe(node.id) + ": expected shape " + shape_str(n.shape) + ", got " +
                     shape_str(value.shape()));
  }
  if (!value.all_finite()) throw NumericError(describe(node.id) + ": non-finite input value");
  values_[node.id] = value;
  input_set_[node.id] = true;
  evaluated_ = false;
}

void Graph::forward(const std::map<std::string, Tensor>& inputs) {
  for (const auto& [name, value] : inputs) set_input(name, value);
  forward();
}

void Graph::forward() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!input_set_[i]) throw DataError(describe(i) + " has no value");
    eval(i);
  }
  evaluated_ = true;
}

void Graph::eval(std::size_t id) {
  const Node& n = nodes_[id];
  Tensor& out = values_[id];
  switch (n.kind) {
    case OpKind::kInput:
      return;
    case OpKind::kParam:
      out = params_[n.param].value;
      return;
    case OpKind::kDense: {
      const Tensor& x = values_[n.inputs[0]];
      const Tensor& w = values_[n.inputs[1]];
      const Tensor& b = values_[n.inputs[2]];
      const std::size_t cols = x.size(), rows = w.size() / cols;
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
        out[r] = acc;
      }
      return;
    }
    case OpKind::kConv2d: {
      const Tensor& x = values_[n.inputs[0]];
      const Tensor& w = values_[n.inputs[1]];
      const Tensor& b = values_[n.inputs[2]];
      const std::size_t cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
      const std::size_t ih = x.dim(1), iw = x.dim(2), oh = out.dim(1), ow = out.dim(2);
      const long pad = static_cast<long>(k / 2);
      const long s = n.stride;
      for (std::size_t o = 0; o < cout; ++o) {
        double* op = &out[o * oh * ow];
        std::fill(op, op + oh * ow, b[o]);
        for (std::size_t c = 0; c < cin; ++c) {
          const double* ip = x.data().data() + c * ih * iw;
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const double wv = w[((o * cin + c) * k + ky) * k + kx];
              for (std::size_t y = 0; y < oh; ++y) {
                const long iy = static_cast<long>(y) * s + static_cast<long>(ky) - pad;
                if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                const double* row = ip + iy * static_cast<long>(iw);
                double* orow = op + y * ow;
                for (std::size_t xo = 0; xo < ow; ++xo) {
                  const long ix = static_cast<long>(xo) * s + static_cast<long>(kx) - pad;
                  if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                  orow[xo] += wv * row[ix];
                }
              }
            }
          }
        }
      }
      return;
    }
    case OpKind::kRelu: {
      const Tensor& x = values_[n.inputs[0]];
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      return;
    }
    case OpKind::kAdd: {
      const Tensor& a = values_[n.inputs[0]];
      const Tensor& b = values_[n.inputs[1]];
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
      return;
    }
    case OpKind::kWeightedSum: {
      out.fill(0.0);
      for (std::size_t t = 0; t < n.inputs.size(); ++t) {
        const Tensor& x = values_[n.inputs[t]];
        const double wt = n.weights[t];
        for (std::size_t i = 0; i < x.size(); ++i) out[i] += wt * x[i];
      }
      return;
    }
    case OpKind::kGlobalAvgPool: {
      const Tensor& x = values_[n.inputs[0]];
      const std::size_t area = x.dim(1) * x.dim(2);
      for (std::size_t c = 0; c < x.dim(0); ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < area; ++i) acc += x[c * area + i];
        out[c] = acc / static_cast<double>(area);
      }
      return;
    }
    case OpKind::kDownsample2x2: {
      const Tensor& x = values_[n.inputs[0]];
      for (std::size_t c = 0; c < out.dim(0); ++c)
        for (std::size_t y = 0; y < out.dim(1); ++y)
          for (std::size_t xo = 0; xo < out.dim(2); ++xo) out.at(c, y, xo) = x.at(c, 2 * y, 2 * xo);
      return;
    }
    case OpKind::kSoftmaxXent: {
      const Tensor& logits = values_[n.inputs[0]];
      const double raw = values_[n.inputs[1]][0];
      const auto label = static_cast<std::size_t>(raw);
      if (raw < 0 || static_cast<double>(label) != raw || label >= logits.size()) {
        throw DataError(describe(id) + ": label " + std::to_string(raw) + " out of range");
      }
      out[0] = softmax_xent_value(logits.data(), label);
      return;
    }
  }
}

void Graph::backward(NodeRef loss) {
  check_ref(loss, "backward loss");
  if (!evaluated_) throw DataError("backward() called before forward()");
  if (shape_size(nodes_[loss.id].shape) != 1) {
    throw ShapeError("backward: loss " + describe(loss.id) + " is not scalar, shape " +
                     shape_str(nodes_[loss.id].shape));
  }
  for (auto& a : adjoints_) a.fill(0.0);
  for (auto& p : params_) p.grad.fill(0.0);
  if (!nodes_[loss.id].needs_grad) return;
  adjoints_[loss.id][0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].needs_grad) backprop(i);
  }
}

void Graph::backprop(std::size_t id) {
  const Node& n = nodes_[id];
  const Tensor& g = adjoints_[id];
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
  switch (n.kind) {
    case OpKind::kInput:
      return;
    case OpKind::kParam: {
      Tensor& pg = params_[n.param].grad;
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      return;
    }
    case OpKind::kDense: {
      const Tensor& x = values_[n.inputs[0]];
      const Tensor& w = values_[n.inputs[1]];
      const std::size_t cols = x.size(), rows = w.size() / cols;
      if (wants(0)) {
        Tensor& gx = adjoints_[n.inputs[0]];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gx[c] += w[r * cols + c] * g[r];
      }
      if (wants(1)) {
        Tensor& gw = adjoints_[n.inputs[1]];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += g[r] * x[c];
      }
      if (wants(2)) {
        Tensor& gb = adjoints_[n.inputs[2]];
        for (std::size_t r = 0; r < rows; ++r) gb[r] += g[r];
      }
      return;
    }
    case OpKind::kConv2d: {
      const Tensor& x = values_[n.inputs[0]];
      const Tensor& w = values_[n.inputs[1]];
      const std::size_t cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
      const std::size_t ih = x.dim(1), iw = x.dim(2), oh = g.dim(1), ow = g.dim(2);
      const long pad = static_cast<long>(k / 2);
      const long s = n.stride;
      const bool gx_on = wants(0), gw_on = wants(1), gb_on = wants(2);
      Tensor* gx = gx_on ? &adjoints_[n.inputs[0]] : nullptr;
      Tensor* gw = gw_on ? &adjoints_[n.inputs[1]] : nullptr;
      for (std::size_t o = 0; o < cout; ++o) {
        const double* gp = g.data().data() + o * oh * ow;
        if (gb_on) {
          double acc = 0.0;
          for (std::size_t i = 0; i < oh * ow; ++i) acc += gp[i];
          adjoints_[n.inputs[2]][o] += acc;
        }
        if (!gx_on && !gw_on) continue;
        for (std::size_t c = 0; c < cin; ++c) {
          const double* ip = x.data().data() + c * ih * iw;
          double* gip = gx_on ? &(*gx)[c * ih * iw] : nullptr;
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::size_t widx = ((o * cin + c) * k + ky) * k + kx;
              const double wv = w[widx];
              double wacc = 0.0;
              for (std::size_t y = 0; y < oh; ++y) {
                const long iy = static_cast<long>(y) * s + static_cast<long>(ky) - pad;
                if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                const double* grow = gp + y * ow;
                const double* row = ip + iy * static_cast<long>(iw);
                double* girow = gx_on ? gip + iy * static_cast<long>(iw) : nullptr;
                for (std::size_t xo = 0; xo < ow; ++xo) {
                  const long ix = static_cast<long>(xo) * s + static_cast<long>(kx) - pad;
                  if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                  wacc += grow[xo] * row[ix];
                  if (gx_on) girow[ix] += wv * grow[xo];
                }
              }
              if (gw_on) (*gw)[widx] += wacc;
            }
          }
        }
      }
      return;
    }
    case OpKind::kRelu: {
      if (!wants(0)) return;
      const Tensor& x = values_[n.inputs[0]];
      Tensor& gx = adjoints_[n.inputs[0]];
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) gx[i] += g[i];
      }
      return;
    }
    case OpKind::kAdd: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        Tensor& gx = adjoints_[n.inputs[k]];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      return;
    }
    case OpKind::kWeightedSum: {
      for (std::size_t t = 0; t < n.inputs.size(); ++t) {
        if (!wants(t)) continue;
        Tensor& gx = adjoints_[n.inputs[t]];
        const double wt = n.weights[t];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += wt * g[i];
      }
      return;
    }
    case OpKind::kGlobalAvgPool: {
      if (!wants(0)) return;
      Tensor& gx = adjoints_[n.inputs[0]];
      const std::size_t area = gx.dim(1) * gx.dim(2);
      for (std::size_t c = 0; c < gx.dim(0); ++c) {
        const double share = g[c] / static_cast<double>(area);
        for (std::size_t i = 0; i < area; ++i) gx[c * area + i] += share;
      }
      return;
    }
    case OpKind::kDownsample2x2: {
      if (!wants(0)) return;
      Tensor& gx = adjoints_[n.inputs[0]];
      for (std::size_t c = 0; c < g.dim(0); ++c)
        for (std::size_t y = 0; y < g.dim(1); ++y)
          for (std::size_t xo = 0; xo < g.dim(2); ++xo) gx.at(c, 2 * y, 2 * xo) += g.at(c, y, xo);
      return;
    }
    case OpKind::kSoftmaxXent: {
      if (!wants(0)) return;
      const Tensor& logits = values_[n.inputs[0]];
      const auto label = static_cast<std::size_t>(values_[n.inputs[1]][0]);
      Tensor& gl = adjoints_[n.inputs[0]];
      for (std::size_t c = 0; c < logits.size(); ++c) {
        const double p = softmax_prob(logits.data(), c);
        gl[c] += g[0] * (p - (c == label ? 1.0 : 0.0));
      }
      return;
    }
  }
}

const Tensor& Graph::value(NodeRef node) const {
  check_ref(node, "value");
  return values_[node.id];
}

const Tensor& Graph::value(std::string_view name) const { return value(at(name)); }

NodeRef Graph::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? NodeRef{} : NodeRef{it->second};
}

NodeRef Graph::at(std::string_view name) const {
  NodeRef ref = find(name);
  if (!ref.valid()) throw DataError("no graph node named '" + std::string(name) + "'");
  return ref;
}

Parameter& Graph::parameter(std::string_view name) {
  NodeRef ref = at(name);
  if (nodes_[ref.id].kind != OpKind::kParam) throw DataError("'" + std::string(name) + "' is not a parameter");
  return params_[nodes_[ref.id].param];
}

const Parameter& Graph::parameter(std::string_view name) const {
  return const_cast<Graph*>(this)->parameter(name);
}

std::size_t Graph::parameter_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::map<std::string, Tensor> Graph::gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : params_) out.emplace(p.name, p.grad);
  return out;
}

std::vector<bool> Graph::ancestors(NodeRef node) const {
  check_ref(node, "ancestors");
  std::vector<bool> mark(nodes_.size(), false);
  mark[node.id] = true;
  for (std::size_t i = node.id + 1; i-- > 0;) {
    if (!mark[i]) continue;
    for (auto in : nodes_[i].inputs) mark[in] = true;
  }
  return mark;
}

bool Graph::depends_on(NodeRef node, NodeRef upstream) const {
  check_ref(upstream, "depends_on");
  return ancestors(node)[upstream.id];
}

}  // namespace sdfas
