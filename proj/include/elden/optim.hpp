#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "elden/rng.hpp"
#include "elden/tape.hpp"
#include "elden/tensor.hpp"

namespace elden::tc {

// Named parameter tensors with gradient slots and Adam moments. One store
// per model; mutated by exactly one training context.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value, grad, m, v;
  };

  int add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor::zeros(init.shape);
    e.m = Tensor::zeros(init.shape);
    e.v = Tensor::zeros(init.shape);
    e.value = std::move(init);
    index_[name] = (int)entries_.size();
    entries_.push_back(std::move(e));
    return (int)entries_.size() - 1;
  }

  int add_uniform_fan_in(const std::string& name, std::size_t fan_in,
                         std::vector<std::size_t> shape, std::mt19937_64& rng) {
    double bound = fan_in > 0 ? 1.0 / std::sqrt((double)fan_in) : 0.0;
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.data) x = u(rng);
    return add(name, std::move(t));
  }

  std::size_t count() const { return entries_.size(); }
  Entry& entry(int i) { return entries_[i]; }
  const Entry& entry(int i) const { return entries_[i]; }
  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads() {
    for (Entry& e : entries_)
      std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Binds parameters to a tape for one step: each parameter becomes a leaf.
struct BoundParams {
  std::vector<std::int32_t> leaves;  // parallel to store entries

  static BoundParams bind(Tape& t, const ParamStore& store) {
    BoundParams b;
    b.leaves.reserve(store.count());
    for (const auto& e : store.entries()) b.leaves.push_back(t.leaf(e.value, true).id);
    return b;
  }

  // Pulls adjoints of the bound leaves into the store's grad slots (zero
  // where no gradient flowed).
  void collect_grads(Tape& t, const std::vector<std::int32_t>& adj, ParamStore& store) const {
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      auto& g = store.entry((int)i).grad;
      std::int32_t a = leaves[i] < (std::int32_t)adj.size() ? adj[leaves[i]] : -1;
      if (a >= 0)
        g.data = t.node(a).value.data;
      else
        std::fill(g.data.begin(), g.data.end(), 0.0);
    }
  }
};

/// Standard Adam with bias correction; β1=0.9, β2=0.999, ε=1e-8.
struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;

  // Applies one update from the store's grad slots. A non-finite gradient
  // anywhere skips the whole step and logs the incident.
  bool step(ParamStore& store, Incidents* inc = nullptr) {
    for (const auto& e : store.entries())
      for (double g : e.grad.data)
        if (!std::isfinite(g)) {
          if (inc) inc->skipped_adam_steps++;
          return false;
        }
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, (double)step_count);
    const double bc2 = 1.0 - std::pow(beta2, (double)step_count);
    for (auto& e : store.entries()) {
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        const double g = e.grad.data[i];
        e.m.data[i] = beta1 * e.m.data[i] + (1.0 - beta1) * g;
        e.v.data[i] = beta2 * e.v.data[i] + (1.0 - beta2) * g * g;
        const double mhat = e.m.data[i] / bc1;
        const double vhat = e.v.data[i] / bc2;
        e.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
    return true;
  }
};

}  // namespace elden::tc
