#pragma once

// Named parameter storage and the two layer types the model is built from.

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "a2s/autodiff.hpp"
#include "a2s/rng.hpp"

namespace a2s::nn {

// Layers keep pointers into the store; entries never move once added.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  // Registers a trainable leaf. Names must be unique.
  ad::Var& add(const std::string& name, Mat init);

  ad::Var& get(const std::string& name);
  const ad::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

  // Parameters whose name starts with `prefix`.
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  // L2 norm of accumulated gradients over parameters with `prefix`.
  double grad_norm(const std::string& prefix = "") const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::size_t> index_;
  std::deque<ad::Var> params_;
};

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

struct Linear {
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);

  ad::Var forward(const ad::Var& x) const;

  ad::Var* weight = nullptr;  // in x out
  ad::Var* bias = nullptr;    // 1 x out
};

// Single-layer GRU with gates ordered [reset | update | candidate].
struct Gru {
  Gru() = default;
  Gru(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng);

  // Projects a stack of inputs for every time step in one product.
  ad::Var input_projection(const ad::Var& x) const { return input.forward(x); }
  ad::Var step(const ad::Var& gx, const ad::Var& h) const;

  Linear input;
  Linear recurrent;
  Eigen::Index hidden_size = 0;
};

}  // namespace a2s::nn
