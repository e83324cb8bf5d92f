#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oci/tensor.hpp"

namespace oci {

/// Named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool has_grad = false;

  Param() = default;
  Param(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)) {
    grad = Tensor::zeros(value.shape);
  }

  void zero_grad() {
    std::fill(grad.data.begin(), grad.data.end(), 0.0);
    has_grad = false;
  }
};

/// Records a forward computation and replays it backwards to accumulate
/// gradients. Node ids are issued in topological order (an op can only
/// consume already-created nodes), so the reverse sweep is simply reverse
/// creation order. Gradients add on fan-out. A tape instance is confined
/// to one thread.
class Tape {
 public:
  using Id = int32_t;

  /// Constant leaf; no gradient flows out of it.
  Id leaf(Tensor t);
  /// Trainable leaf; backward() accumulates into p.grad.
  Id param(Param& p);

  Id add(Id a, Id b);                 // same shape
  Id sub(Id a, Id b);                 // same shape
  Id mul(Id a, Id b);                 // elementwise, same shape
  Id scale(Id x, double s);
  Id matmul(Id a, Id b);              // [m,k] x [k,n]
  Id matmul_nt(Id a, Id b);           // a x b^T : [m,k] x [n,k] -> [m,n]
  Id add_row(Id x, Id bias);          // bias [1,n] broadcast over rows of [m,n]
  Id linear(Id x, Id w, Id bias);     // matmul + add_row
  Id relu(Id x);
  Id layer_norm(Id x, Id gain, Id bias, double eps = 1e-5);  // last axis
  Id softmax_rows(Id x);
  Id depthwise_conv1d(Id x, Id kernel);  // x [L,C], kernel [k,C], same-length
  Id window_stack(Id x, int r);       // [L,C] -> [ceil(L/r), r*C], zero pad
  Id concat_rows(std::span<const Id> parts);
  Id concat_cols(std::span<const Id> parts);
  Id mean_rows(Id x);                 // [L,C] -> [1,C]
  Id sum(Id x);                       // -> scalar [1,1]
  Id rows_select(Id table, std::vector<int> rows);  // gather rows, scatter-add back
  Id cross_entropy_logits(Id logits, int target);  // [1,A] -> scalar

  const Tensor& value(Id id) const { return nodes_[check(id)].value; }
  /// Gradient of the last backward() root w.r.t. this node.
  const Tensor& grad(Id id) const { return nodes_[check(id)].grad; }

  /// Reverse sweep from a scalar root; accumulates into bound Params.
  void backward(Id root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, Id)> back;  // nullptr for leaves
    Param* bound = nullptr;
  };

  Id push(Tensor value, std::function<void(Tape&, Id)> back, const char* op);
  Id check(Id id) const;
  Tensor& grad_mut(Id id) { return nodes_[check(id)].grad; }

  std::vector<Node> nodes_;
};

/// Adam with bias correction. step() applies the update from accumulated
/// gradients and zeroes them afterwards.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg = {});

  /// Throws UsageError when called with no gradient populated anywhere.
  void step();

  int64_t step_count() const { return t_; }
  const std::vector<Param*>& params() const { return params_; }
  double lr() const { return cfg_.lr; }
  /// Adjust the step size between updates (for external schedules).
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

/// Rescale accumulated gradients so their joint L2 norm is at most
/// `max_norm`. Returns the norm measured before clipping.
double clip_grad_norm(std::span<Param* const> params, double max_norm);

/// Central-difference gradient check. f(true) must return the loss and
/// leave gradients accumulated in the params; f(false) must return the
/// loss without touching gradients. Returns the max over coordinates of
/// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
double grad_check(const std::function<double(bool)>& f,
                  std::span<Param* const> params, double eps = 1e-5);

/// Checkpoint file: versioned header, then (name, shape, little-endian
/// doubles) per parameter. load matches by name and rejects shape
/// mismatches.
void save_checkpoint(const std::string& path, std::span<const Param* const> params);
void load_checkpoint(const std::string& path, std::span<Param* const> params);

}  // namespace oci

// The autodiff vocabulary lives in the root namespace; this alias lets
// dependent code qualify the names by owning module.
namespace oci {
namespace autodiff = ::oci;
}  // namespace oci
