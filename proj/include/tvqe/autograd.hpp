#pragma once

#include <functional>
#include <memory>
#include <unordered_set>

#include "tvqe/tensor.hpp"

namespace tvqe {

// Test harness hook: when set to an op name, that op's contribution to the
// backward pass is sign-flipped. Lets the gradient checker prove it catches a
// broken backward rule. Empty in normal operation.
inline std::string& backward_sign_flip_op() {
  static std::string op;
  return op;
}

// Records one node per forward op, in execution order, which is already a
// topological order of the graph. backward() replays it in reverse.
template <class S>
class Tape {
public:
  struct Node {
    const char* op;
    std::vector<std::shared_ptr<TensorImpl<S>>> inputs;
    std::shared_ptr<TensorImpl<S>> output;
    std::function<void()> backward;
  };

  static Tape*& active() {
    static thread_local Tape* a = nullptr;
    return a;
  }

  void record(const char* op,
              std::vector<std::shared_ptr<TensorImpl<S>>> inputs,
              std::shared_ptr<TensorImpl<S>> output,
              std::function<void()> backward) {
    if (!backward_sign_flip_op().empty() && backward_sign_flip_op() == op) {
      backward = [fn = std::move(backward), out = output]() {
        for (S& v : out->grad) v = -v;
        fn();
        for (S& v : out->grad) v = -v;
      };
    }
    nodes_.push_back(Node{op, std::move(inputs), std::move(output),
                          std::move(backward)});
  }

  size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every recorded tensor that
  // requires grad. Node outputs get fresh (zeroed) grads each call; leaf grads
  // are additive across calls and are the caller's to clear.
  void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1)
      throw UsageError("backward: loss must be scalar, got shape " +
                       shape_str(loss.shape()));
    std::unordered_set<TensorImpl<S>*> outputs;
    for (auto& n : nodes_) {
      n.output->grad.assign(n.output->data.size(), S(0));
      outputs.insert(n.output.get());
    }
    loss.impl()->grad.assign(1, S(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
  }

private:
  std::vector<Node> nodes_;
};

// RAII activation of a tape on the current thread. Ops record only while one
// is active, so plain forward calls stay pure.
template <class S>
class TapeScope {
public:
  explicit TapeScope(Tape<S>& t) : prev_(Tape<S>::active()) {
    Tape<S>::active() = &t;
  }
  ~TapeScope() { Tape<S>::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape<S>* prev_;
};

// Grad buffer of t if gradients should flow into it, else nullptr.
template <class S>
inline std::vector<S>* grad_target(const std::shared_ptr<TensorImpl<S>>& t) {
  if (!t->requires_grad) return nullptr;
  if (t->grad.empty()) t->grad.assign(t->data.size(), S(0));
  return &t->grad;
}

}  // namespace tvqe
