#include "colf/nn/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace colf::nn {

void MlpSpec::validate() const {
  require(input_dim >= 1 && output_dim >= 1, "MlpSpec: input/output dims must be >= 1");
  require(!hidden_dims.empty(), "MlpSpec: hidden_dims must be non-empty");
  for (int h : hidden_dims) require(h >= 1, "MlpSpec: hidden dims must be >= 1");
}

int MlpSpec::layer_in(int layer) const { return layer == 0 ? input_dim : hidden_dims.at(layer - 1); }

int MlpSpec::layer_out(int layer) const {
  return layer == num_layers() - 1 ? output_dim : hidden_dims.at(layer);
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (int l = 0; l < num_layers(); ++l) n += static_cast<std::size_t>(layer_in(l) + 1) * layer_out(l);
  return n;
}

std::string MlpSpec::to_string() const {
  std::ostringstream os;
  os << input_dim;
  for (int h : hidden_dims) os << "-" << h;
  os << "-" << output_dim;
  return os.str();
}

namespace {

// Q factor of a Gaussian matrix, sign-corrected so the draw is Haar-uniform.
Mat<double> random_orthogonal(int rows, int cols, Rng& rng) {
  const int n = std::max(rows, cols);
  const int k = std::min(rows, cols);
  Mat<double> g(n, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = standard_normal(rng);
  Eigen::HouseholderQR<Mat<double>> qr(g);
  Mat<double> q = qr.householderQ() * Mat<double>::Identity(n, k);
  const Mat<double> r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  if (rows >= cols) return q;
  return q.transpose();
}

}  // namespace

template <typename S>
void orthogonal_init(ParameterSet<S>& params, Rng& rng, double hidden_gain, double output_gain) {
  const MlpSpec& spec = params.spec();
  for (int l = 0; l < spec.num_layers(); ++l) {
    const double gain = l + 1 == spec.num_layers() ? output_gain : hidden_gain;
    params.weight(l) = (gain * random_orthogonal(spec.layer_out(l), spec.layer_in(l), rng)).template cast<S>();
    params.bias(l).setZero();
  }
}

template void orthogonal_init<float>(ParameterSet<float>&, Rng&, double, double);
template void orthogonal_init<double>(ParameterSet<double>&, Rng&, double, double);

}  // namespace colf::nn
