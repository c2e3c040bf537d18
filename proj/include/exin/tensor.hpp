#pragma once
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <new>
#include <string>
#include <unordered_map>
#include <vector>

#include "exin/error.hpp"

namespace exin {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// All numeric buffers are 64-byte aligned. SIMD kernels pick code paths by
// pointer alignment; pinning the base alignment makes every result a pure
// function of the inputs, which the bit-identity guarantees rely on.
template <class T>
struct AlignedAlloc64 {
  using value_type = T;
  AlignedAlloc64() = default;
  template <class U>
  AlignedAlloc64(const AlignedAlloc64<U>&) {}
  T* allocate(std::size_t n) {
    if (n == 0) return nullptr;
    const std::size_t bytes = (n * sizeof(T) + 63) / 64 * 64;
    void* p = std::aligned_alloc(64, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }
  template <class U>
  bool operator==(const AlignedAlloc64<U>&) const {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAlloc64<double>>;

class Tape;

// Dense row-major f64 tensor. Copying a Tensor shares storage (ops never
// mutate inputs, so shared values stay stable for captured backward
// closures). Gradients do not live here: they are owned by the tape of the
// forward pass that produced or consumed the tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  int64_t dim(int axis) const;

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  Buffer& vec() { return *data_; }
  const Buffer& vec() const { return *data_; }
  double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool rg) {
    requires_grad_ = rg;
    return *this;
  }

  // identity of the underlying buffer; key for leaf lookup
  const void* storage_id() const { return data_.get(); }

  // same values, no autodiff participation: shares storage, drops the tape
  // link and the requires_grad flag
  Tensor detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
  }

 private:
  Shape shape_;
  std::shared_ptr<Buffer> data_;
  bool requires_grad_ = false;
  // cache: node on the tape of generation gen_ that produced / registered this value
  mutable int node_ = -1;
  mutable uint64_t gen_ = 0;
  friend class Tape;
};

// Named model parameter. frozen=true means the optimizer never touches it and
// no gradient is accumulated for it (gradient still flows through ops that
// consume it).
struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool frz = false)
      : name(std::move(n)), value(std::move(v)), frozen(frz) {
    value.set_requires_grad(!frozen);
  }
  void freeze() {
    frozen = true;
    value.set_requires_grad(false);
  }
};

// Reverse-mode tape. Constructing a Tape makes it the active tape for the
// current thread (restored on destruction), so a training step is just:
//
//   Tape tape; ... forward ops ...; tape.backward(loss); optimizer.step(tape);
//
// Ops record nodes in creation order, which is a topological order, so
// backward is a single reverse sweep. Nodes hold backward closures that
// capture the forward values they need (shared storage, cheap).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const double* grad_out)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  // Node id of t on this tape: its producing node, or a fresh leaf node if
  // t requires grad, or -1 if t is a constant for this tape.
  int node_of(const Tensor& t);

  // Record a new node producing `out`. Called by ops after computing the value.
  void record(Tensor& out, BackwardFn fn);

  // Run reverse sweep from a scalar loss produced on this tape.
  void backward(const Tensor& loss);

  // Gradient accumulation buffer for a node (zero-initialized on first use).
  double* grad_buf(int node);

  // After backward(): gradient of a tensor known to this tape, or nullptr if
  // no gradient reached it. The buffer is valid until reset()/destruction.
  const Buffer* grad(const Tensor& t) const;

  size_t num_nodes() const { return nodes_.size(); }
  uint64_t generation() const { return gen_; }

  // Drop all nodes and gradients; previously produced tensors become
  // constants for this tape.
  void reset();

 private:
  struct Node {
    int64_t size = 0;
    BackwardFn backward;  // empty for leaves
    Buffer grad;          // empty until first accumulation
  };
  std::vector<Node> nodes_;
  std::unordered_map<const void*, int> leaves_;
  uint64_t gen_ = 0;
  Tape* prev_active_ = nullptr;

  static uint64_t next_generation();
};

// Runtime toggle for post-op finite checks (NaN/Inf scan of op outputs).
// Defaults to on in debug builds, off in release; tests flip it explicitly.
bool& finite_checks();
void check_finite(const Tensor& t, const char* op);

}  // namespace exin
