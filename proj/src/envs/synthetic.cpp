// Synthetic sparse linear-Gaussian dynamics with a known dependency mask;
// the detection oracle fixture: s_{t+1} = M .* W s_t + b + noise.

#include <cmath>

#include "elden/envs/factored_env.hpp"

namespace elden::envs {

namespace {

constexpr double kContribThreshold = 1e-12;

class SyntheticLinearEnv final : public FactoredEnv {
 public:
  SyntheticLinearEnv(int n, double sparsity, std::uint64_t seed) : n_(n) {
    if (n < 2) throw std::invalid_argument("synthetic: need N >= 2");
    if (!(sparsity > 0.0 && sparsity < 1.0))
      throw std::invalid_argument("synthetic: sparsity must be in (0, 1)");
    for (int i = 0; i < n; ++i)
      schema_.factors.push_back({"f" + std::to_string(i), false, 0, 1});
    schema_.action_classes = 2;  // actions have no effect on the dynamics
    schema_.validate();

    auto rng = rng::engine(rng::child(seed, "synthetic.structure"));
    std::uniform_real_distribution<double> uw(-1.0, 1.0);
    std::bernoulli_distribution edge(sparsity);
    mask_.assign((std::size_t)n * n, 0);
    w_.assign((std::size_t)n * n, 0.0);
    b_.assign(n, 0.0);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const bool on = (i == j) ? true : edge(rng);  // diagonal kept active
        mask_[(std::size_t)i * n + j] = on ? 1 : 0;
        if (on) w_[(std::size_t)i * n + j] = uw(rng);
      }
      b_[j] = 0.1 * uw(rng);
    }
    // Row-normalize for stability: the map stays a contraction.
    for (int j = 0; j < n; ++j) {
      double colsum = 0.0;
      for (int i = 0; i < n; ++i) colsum += std::fabs(w_[(std::size_t)i * n + j]);
      if (colsum > 0.9)
        for (int i = 0; i < n; ++i) w_[(std::size_t)i * n + j] *= 0.9 / colsum;
    }
    reset(seed);
  }

  std::string name() const override { return "synthetic"; }
  const FactorSchema& schema() const override { return schema_; }
  int episode_limit() const override { return 50; }
  int num_stages() const override { return 1; }
  const FactoredState& state() const override { return state_; }

  void reset(std::uint64_t seed) override {
    noise_rng_ = rng::engine(rng::child(seed, "synthetic.noise"));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    state_ = FactoredState::zeros(schema_);
    for (int i = 0; i < n_; ++i) state_.real[i][0] = u(noise_rng_);
    steps_ = 0;
    max_stage_ = 0;
  }

  StepResult step(int action) override {
    if (action < 0 || action >= schema_.action_classes)
      throw std::invalid_argument("synthetic: invalid action index");
    StepResult r;
    r.next = state_;
    r.graph = EdgeMatrix::for_factors(n_);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (int j = 0; j < n_; ++j) {
      double v = b_[j];
      for (int i = 0; i < n_; ++i) {
        if (!mask_[(std::size_t)i * n_ + j]) continue;
        const double contrib = w_[(std::size_t)i * n_ + j] * state_.real[i][0];
        v += contrib;
        if (std::fabs(contrib) > kContribThreshold) r.graph.at(i, j) = 1;
      }
      r.next.real[j][0] = v + noise(noise_rng_);
    }
    state_ = r.next;
    ++steps_;
    r.done = steps_ >= episode_limit();
    r.stage = 0;
    return r;
  }

  int scripted_action(std::mt19937_64& rng) const override { return (int)(rng() % 2); }

  const std::vector<std::uint8_t>& mask() const { return mask_; }

 private:
  int n_;
  FactorSchema schema_;
  FactoredState state_;
  std::vector<std::uint8_t> mask_;
  std::vector<double> w_, b_;
  std::mt19937_64 noise_rng_;
};

}  // namespace

std::unique_ptr<FactoredEnv> synthetic_linear_env(int n_factors, double sparsity,
                                                  std::uint64_t seed) {
  return std::make_unique<SyntheticLinearEnv>(n_factors, sparsity, seed);
}

std::unique_ptr<FactoredEnv> make_env(const std::string& name, const EnvOptions& opt) {
  if (name == "thawing") return thawing_env(opt);
  if (name == "carwash") return carwash_env(opt);
  if (name == "minecraft2d" || name == "minecraft") return minecraft2d_env(opt);
  if (name == "synthetic") return synthetic_linear_env(10, 0.3, 1);
  throw std::invalid_argument("unknown environment: " + name);
}

}  // namespace elden::envs
