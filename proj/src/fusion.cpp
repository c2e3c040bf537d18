#include "exin/fusion.hpp"

#include "exin/ops.hpp"

namespace exin {

static void check_pair(const Tensor& f_gen, const Tensor& f_exp, const char* where) {
  if (f_gen.shape() != f_exp.shape())
    throw ShapeError(std::string(where) + ": stream shapes must match");
  if (f_gen.shape().empty()) throw ShapeError(std::string(where) + ": streams must be non-scalar");
}

Tensor FusionRouter::operator()(const Tensor& f_gen, const Tensor& f_exp) const {
  check_pair(f_gen, f_exp, "fusion gate");
  return sigmoid(mlp(concat_last(f_gen, f_exp)));
}

Tensor fuse_gated(const Tensor& f_gen, const Tensor& f_exp, const Tensor& alpha) {
  check_pair(f_gen, f_exp, "fuse_gated");
  const auto& gs = f_gen.shape();
  const auto& as = alpha.shape();
  if (as.size() != gs.size() || as.back() != 1 ||
      !std::equal(as.begin(), as.end() - 1, gs.begin()))
    throw ShapeError("fuse_gated: alpha must be stream shape with trailing dim 1");
  for (int64_t i = 0; i < alpha.size(); ++i) {
    const double a = alpha.data()[i];
    if (!(a >= 0.0 && a <= 1.0)) throw ContractError("fuse_gated: gate value outside [0, 1]");
  }
  Tensor one_minus = affine(alpha, -1.0, 1.0);
  return add(mul(f_gen, one_minus), mul(f_exp, alpha));
}

Tensor fuse_add(const Tensor& f_gen, const Tensor& f_exp) {
  check_pair(f_gen, f_exp, "fuse_add");
  return add(f_gen, f_exp);
}

}  // namespace exin
