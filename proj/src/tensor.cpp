#include "exin/tensor.hpp"

#include <cmath>
#include <sstream>

namespace exin {

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (int64_t d : shape_)
    if (d < 0) throw ShapeError("negative dim in " + shape_str(shape_));
  data_ = std::make_shared<Buffer>(static_cast<size_t>(shape_size(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  for (int64_t d : shape_)
    if (d < 0) throw ShapeError("negative dim in " + shape_str(shape_));
  if (shape_size(shape_) != static_cast<int64_t>(values.size()))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not fill " +
                     shape_str(shape_));
  data_ = std::make_shared<Buffer>(values.begin(), values.end());
}

int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  return shape_[static_cast<size_t>(axis)];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of size " + std::to_string(size()));
  return (*data_)[0];
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

uint64_t Tape::next_generation() {
  static thread_local uint64_t gen = 0;
  return ++gen;
}

Tape::Tape() : gen_(next_generation()) {
  prev_active_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_active_; }

Tape* Tape::active() { return g_active_tape; }

int Tape::node_of(const Tensor& t) {
  if (!t.defined()) throw ContractError("node_of on undefined tensor");
  if (t.gen_ == gen_ && t.node_ >= 0) return t.node_;
  if (!t.requires_grad()) return -1;
  auto it = leaves_.find(t.storage_id());
  int id;
  if (it != leaves_.end()) {
    id = it->second;
  } else {
    id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{t.size(), {}, {}});
    leaves_.emplace(t.storage_id(), id);
  }
  t.node_ = id;
  t.gen_ = gen_;
  return id;
}

void Tape::record(Tensor& out, BackwardFn fn) {
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{out.size(), std::move(fn), {}});
  out.node_ = id;
  out.gen_ = gen_;
}

double* Tape::grad_buf(int node) {
  if (node < 0 || node >= static_cast<int>(nodes_.size()))
    throw ContractError("grad_buf: bad node id " + std::to_string(node));
  Node& n = nodes_[static_cast<size_t>(node)];
  if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.size), 0.0);
  return n.grad.data();
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar");
  if (!(loss.gen_ == gen_ && loss.node_ >= 0))
    throw ContractError("backward: loss was not produced on the live tape");
  if (!std::isfinite(loss.item())) throw NumericError("backward: loss is not finite");
  int root = loss.node_;
  grad_buf(root)[0] = 1.0;
  // Ops called from inside backward closures must not record onto this tape.
  Tape* saved = g_active_tape;
  g_active_tape = nullptr;
  try {
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, n.grad.data());
    }
  } catch (...) {
    g_active_tape = saved;
    throw;
  }
  g_active_tape = saved;
  // every registered leaf ends up with a (possibly zero) gradient buffer
  for (const auto& [ptr, id] : leaves_) grad_buf(id);
}

const Buffer* Tape::grad(const Tensor& t) const {
  int id = -1;
  if (t.gen_ == gen_ && t.node_ >= 0) {
    id = t.node_;
  } else {
    auto it = leaves_.find(t.storage_id());
    if (it != leaves_.end()) id = it->second;
  }
  if (id < 0) return nullptr;
  const Node& n = nodes_[static_cast<size_t>(id)];
  return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::reset() {
  nodes_.clear();
  leaves_.clear();
  gen_ = next_generation();
}

bool& finite_checks() {
#ifdef NDEBUG
  static thread_local bool on = false;
#else
  static thread_local bool on = true;
#endif
  return on;
}

void check_finite(const Tensor& t, const char* op) {
  if (!finite_checks()) return;
  const double* p = t.data();
  for (int64_t i = 0, n = t.size(); i < n; ++i)
    if (!std::isfinite(p[i]))
      throw NumericError(std::string(op) + ": non-finite output at flat index " +
                         std::to_string(i));
}

}  // namespace exin
