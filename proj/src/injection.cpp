#include "exin/injection.hpp"

#include "exin/ops.hpp"

namespace exin {

static void check_pair(const Tensor& h_vis, const Tensor& fused, const char* where) {
  if (h_vis.shape() != fused.shape())
    throw ShapeError(std::string(where) + ": visual state and fused shapes must match");
  if (h_vis.shape().empty())
    throw ShapeError(std::string(where) + ": inputs must be non-scalar");
}

Tensor InjectionLayer::compute_route(const Tensor& h_vis, const Tensor& fused) const {
  check_pair(h_vis, fused, "injection route");
  return sigmoid(route_mlp(concat_last(h_vis, fused)));
}

Tensor InjectionLayer::operator()(const Tensor& h_vis, const Tensor& fused) const {
  Tensor g = compute_route(h_vis, fused);
  Tensor scaled = mul(mul(fused, g), tanh(gamma.value));
  return add(h_vis, scaled);
}

void InjectionLayer::collect(ParamList& out) {
  route_mlp.collect(out);
  out.push_back(&gamma);
}

Tensor direct_inject(const Tensor& h_vis, const Tensor& fused, const Tensor& gamma) {
  check_pair(h_vis, fused, "direct_inject");
  if (gamma.size() != 1) throw ShapeError("direct_inject: gamma must be a single scalar");
  return add(h_vis, mul(fused, tanh(gamma)));
}

}  // namespace exin
