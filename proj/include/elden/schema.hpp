#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace elden {

// Per-factor description of the factored state space S = S^1 x ... x S^N
// plus the primitive-action space.
struct FactorSpec {
  std::string name;
  bool categorical = true;
  int classes = 0;  // categorical: C_i >= 2
  int dim = 0;      // real-valued: d_i >= 1

  int input_dim() const { return categorical ? classes : dim; }
};

struct FactorSchema {
  std::vector<FactorSpec> factors;
  int action_classes = 0;

  int num_factors() const { return (int)factors.size(); }
  int num_inputs() const { return num_factors() + 1; }  // + action
  bool all_categorical() const {
    for (const auto& f : factors)
      if (!f.categorical) return false;
    return true;
  }
  int input_dim(int i) const {
    return i == num_factors() ? action_classes : factors[i].input_dim();
  }
  int total_input_dim() const {
    int d = 0;
    for (int i = 0; i < num_inputs(); ++i) d += input_dim(i);
    return d;
  }

  void validate() const {
    if (num_factors() < 2) throw std::invalid_argument("schema: need at least 2 factors");
    for (const auto& f : factors) {
      if (f.categorical && f.classes < 2)
        throw std::invalid_argument("schema: categorical factor '" + f.name +
                                    "' needs >= 2 classes");
      if (!f.categorical && f.dim < 1)
        throw std::invalid_argument("schema: real factor '" + f.name + "' needs dim >= 1");
    }
    if (action_classes < 2) throw std::invalid_argument("schema: need >= 2 actions");
  }

  bool operator==(const FactorSchema& o) const {
    if (action_classes != o.action_classes || factors.size() != o.factors.size()) return false;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      const auto& a = factors[i];
      const auto& b = o.factors[i];
      if (a.name != b.name || a.categorical != b.categorical || a.classes != b.classes ||
          a.dim != b.dim)
        return false;
    }
    return true;
  }
};

// One factored state; categorical factors hold a class id, real factors a
// value vector.
struct FactoredState {
  std::vector<int> cat;                     // -1 for real factors
  std::vector<std::vector<double>> real;    // empty for categorical factors

  static FactoredState zeros(const FactorSchema& s) {
    FactoredState st;
    st.cat.assign(s.factors.size(), -1);
    st.real.resize(s.factors.size());
    for (std::size_t i = 0; i < s.factors.size(); ++i) {
      if (s.factors[i].categorical)
        st.cat[i] = 0;
      else
        st.real[i].assign(s.factors[i].dim, 0.0);
    }
    return st;
  }

  bool operator==(const FactoredState& o) const { return cat == o.cat && real == o.real; }
};

// Binary (N+1) x N matrix: rows are the N factors plus the action, columns
// the next-step factors.
struct EdgeMatrix {
  int n_in = 0, n_out = 0;
  std::vector<std::uint8_t> bits;  // row-major

  EdgeMatrix() = default;
  EdgeMatrix(int inputs, int outputs)
      : n_in(inputs), n_out(outputs), bits((std::size_t)inputs * outputs, 0) {}
  static EdgeMatrix for_factors(int n) { return EdgeMatrix(n + 1, n); }

  std::uint8_t& at(int i, int j) { return bits[(std::size_t)i * n_out + j]; }
  std::uint8_t at(int i, int j) const { return bits[(std::size_t)i * n_out + j]; }
  int count() const {
    int c = 0;
    for (auto b : bits) c += b;
    return c;
  }
  bool operator==(const EdgeMatrix& o) const {
    return n_in == o.n_in && n_out == o.n_out && bits == o.bits;
  }
};

// The unit of experience shared by buffers, training, and evaluation.
struct TransitionRecord {
  FactoredState state;
  int action = 0;
  FactoredState next;
  double task_reward = 0.0;
  bool done = false;
  EdgeMatrix graph;  // ground truth local dependency graph
  int stage = 0;
};

}  // namespace elden
