#include "a2s/nn.hpp"

#include <cmath>

#include "a2s/error.hpp"

namespace a2s::nn {

ad::Var& ParamStore::add(const std::string& name, Mat init) {
  if (index_.count(name)) throw Error(ErrorCode::ContractViolation, "duplicate parameter " + name);
  index_[name] = params_.size();
  order_.push_back(name);
  params_.emplace_back(std::move(init), true);
  return params_.back();
}

ad::Var& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::ContractViolation, "unknown parameter " + name);
  return params_[it->second];
}

const ad::Var& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::ContractViolation, "unknown parameter " + name);
  return params_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value().size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.mutable_grad().resize(0, 0);
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& n : order_) {
    if (n.compare(0, prefix.size(), prefix) == 0) out.push_back(n);
  }
  return out;
}

double ParamStore::grad_norm(const std::string& prefix) const {
  double sq = 0.0;
  for (const auto& n : names_with_prefix(prefix)) {
    const auto& g = get(n).grad();
    if (g.size()) sq += g.squaredNorm();
  }
  return std::sqrt(sq);
}

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Linear::Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = &store.add(name + ".weight", uniform_init(in, out, bound, rng));
  bias = &store.add(name + ".bias", uniform_init(1, out, bound, rng));
}

ad::Var Linear::forward(const ad::Var& x) const { return ad::add_bias(ad::matmul(x, *weight), *bias); }

Gru::Gru(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng)
    : hidden_size(hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  input.weight = &store.add(name + ".w_ih", uniform_init(in, 3 * hidden, bound, rng));
  input.bias = &store.add(name + ".b_ih", uniform_init(1, 3 * hidden, bound, rng));
  recurrent.weight = &store.add(name + ".w_hh", uniform_init(hidden, 3 * hidden, bound, rng));
  recurrent.bias = &store.add(name + ".b_hh", uniform_init(1, 3 * hidden, bound, rng));
}

ad::Var Gru::step(const ad::Var& gx, const ad::Var& h) const {
  return ad::gru_cell(gx, recurrent.forward(h), h);
}

}  // namespace a2s::nn
