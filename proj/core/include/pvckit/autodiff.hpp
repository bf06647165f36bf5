#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "pvckit/kernels.hpp"
#include "pvckit/tensor.hpp"

namespace pvckit {

class Tape;

// Lightweight handle to a tape node. Copies are free; the value lives on the
// tape for the tape's lifetime.
class Var {
public:
  Var() = default;
  bool defined() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  int32_t id() const { return id_; }

private:
  friend class Tape;
  Var(Tape* t, int32_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int32_t id_ = -1;
};

class Gradients {
public:
  const Tensor& at(const Var& v) const;
  bool has(const Var& v) const;

private:
  friend class Tape;
  std::unordered_map<int32_t, Tensor> by_id_;
};

// Reverse-mode tape. Nodes are recorded in topological order by construction;
// backward walks them exactly once in reverse. A tape belongs to one training
// step (or one evaluation) and is not shared across concurrent steps.
class Tape {
public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var watch(Tensor t);     // differentiable leaf
  Var constant(Tensor t);  // non-differentiable leaf

  bool grad_enabled() const { return grad_enabled_; }
  size_t size() const { return nodes_.size(); }

  // dLoss/dLeaf for every watched leaf; leaves that do not contribute get
  // zeros. The loss must be a single-element tensor.
  Gradients backward(const Var& loss);

  // op-layer API: parent grads are returned positionally and accumulated by
  // the engine, so an op may hand back the incoming gradient unchanged.
  using BackwardFn = std::function<void(const Tensor& grad_out, std::vector<Tensor>& parent_grads)>;
  Var emit(const char* op, Tensor value, std::vector<int32_t> parents, BackwardFn fn);
  const Tensor& value_of(int32_t id) const;

private:
  struct Node {
    Tensor value;
    std::vector<int32_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  // deque: growing the tape never invalidates value references held by Vars
  std::deque<Node> nodes_;
  bool grad_enabled_;
};

// ---- differentiable ops ----------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
Var square(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var abs(const Var& a);
Var sum(const Var& a);   // -> rank-0
Var mean(const Var& a);  // -> rank-0

Var global_avg_pool(const Var& x);  // [N,C,D,H,W] -> [N,C,1,1,1]
Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, std::vector<int64_t> perm);
Var concat(const std::vector<Var>& parts, int64_t axis);
Var slice(const Var& a, std::vector<int64_t> start, Shape sizes);
Var pad_zero(const Var& a, std::vector<int64_t> lo, std::vector<int64_t> hi);
Var pad_reflect(const Var& a, std::vector<int64_t> lo, std::vector<int64_t> hi);
Var repeat_channels(const Var& a, int64_t times);

Var matmul(const Var& x, const Var& w);
Var fully_connected(const Var& x, const Var& w, const Var& b);

Var conv3d(const Var& x, const Var& k, const Var& bias, const kernels::Conv3dSpec& s);
Var conv3d(const Var& x, const Var& k, const kernels::Conv3dSpec& s);
Var conv3d_transpose(const Var& x, const Var& k, const Var& bias, const kernels::Conv3dSpec& s);
Var conv3d_transpose(const Var& x, const Var& k, const kernels::Conv3dSpec& s);

// (1/3) * w ⊙ (a_spa + a_in + a_out) with each attention broadcast along its
// own kernel dimension. `transpose` says the kernel is laid out [Cin,Cout,...]
// instead of [Cout,Cin,...]. Bias is deliberately not modulated.
Var kernel_attention(const Var& w, const Var& a_spa, const Var& a_in, const Var& a_out, bool transpose);

}  // namespace pvckit
