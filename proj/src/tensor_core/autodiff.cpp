#include "layerlens/autodiff.h"

#include <string>

#include "layerlens/error.h"

namespace layerlens {

namespace detail {
struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  GradientRule rule;
  std::string_view op = "constant";
};
}  // namespace detail

using detail::Node;

Var::Var() : node_(std::make_shared<Node>()) {}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->op = "leaf";
  return Var(std::move(node));
}

const Tensor& Var::value() const { return node_->value; }
const Shape& Var::shape() const { return node_->value.shape(); }
bool Var::requires_grad() const { return node_->requires_grad; }

Var make_op(Tensor value, std::vector<Var> inputs, GradientRule rule, std::string_view op_name) {
  if (!value.all_finite()) {
    throw NumericalError("non-finite value produced by " + std::string(op_name));
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op_name;
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_);
    node->rule = std::move(rule);
  }
  return Var(std::move(node));
}

const Tensor& Gradients::of(const Var& leaf) const {
  auto it = grads_.find(leaf.node_.get());
  if (it == grads_.end()) throw Error("no gradient recorded for this variable");
  return it->second;
}

bool Gradients::contains(const Var& leaf) const { return grads_.count(leaf.node_.get()) != 0; }

namespace {

std::vector<Node*> topological_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_map<Node*, bool> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited[root] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !visited[child]) {
        visited[child] = true;
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // inputs before consumers
}

void accumulate(Tensor& into, const Tensor& g) {
  auto dst = into.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Gradients backward(const Var& loss) {
  Node* root = loss.node_.get();
  if (root->value.size() != 1) {
    throw ShapeError("backward requires a single-element loss, got shape " + to_string(root->value.shape()));
  }
  Gradients result;
  if (!root->requires_grad) return result;

  const auto order = topological_order(root);
  std::unordered_map<Node*, Tensor> grads;
  grads.emplace(root, Tensor(root->value.shape(), 1.0));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    if (node->inputs.empty()) {
      if (!found->second.all_finite()) throw NumericalError("non-finite gradient at a leaf");
      result.grads_.emplace(node, std::move(found->second));
      continue;
    }
    std::vector<bool> wanted(node->inputs.size());
    for (std::size_t i = 0; i < wanted.size(); ++i) wanted[i] = node->inputs[i]->requires_grad;
    auto input_grads = node->rule(found->second, wanted);
    grads.erase(found);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      if (!wanted[i]) continue;
      Node* in = node->inputs[i].get();
      if (input_grads[i].shape() != in->value.shape()) {
        throw ShapeError("gradient shape mismatch in op " + std::string(node->op));
      }
      auto slot = grads.find(in);
      if (slot == grads.end()) {
        grads.emplace(in, std::move(input_grads[i]));
      } else {
        accumulate(slot->second, input_grads[i]);
      }
    }
  }
  for (Node* node : order) {
    if (!node->inputs.empty()) {
      node->inputs.clear();
      node->rule = nullptr;
    }
  }
  return result;
}

}  // namespace layerlens
