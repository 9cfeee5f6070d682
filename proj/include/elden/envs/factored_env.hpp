#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "elden/schema.hpp"

namespace elden::envs {

struct StepResult {
  FactoredState next;
  double task_reward = 0.0;  // sparse, 0 or 1 (1 only at full completion)
  bool done = false;
  EdgeMatrix graph;
  int stage = 0;  // max stage reached this episode
};

// Factored-MDP simulator with ground-truth per-transition dependency graphs.
// reset(seed) is deterministic; step() is fully deterministic given state.
class FactoredEnv {
 public:
  virtual ~FactoredEnv() = default;

  virtual std::string name() const = 0;
  virtual const FactorSchema& schema() const = 0;
  virtual int episode_limit() const = 0;
  virtual int num_stages() const = 0;

  virtual void reset(std::uint64_t seed) = 0;
  virtual const FactoredState& state() const = 0;
  virtual StepResult step(int action) = 0;

  // Next stage-advancing primitive for the scripted collection policy.
  virtual int scripted_action(std::mt19937_64& rng) const = 0;

  int steps_taken() const { return steps_; }
  int max_stage() const { return max_stage_; }
  double normalized_stage() const { return (double)max_stage_ / (double)num_stages(); }

 protected:
  int steps_ = 0;
  int max_stage_ = 0;
};

// Ordered stage predicates with sequential gating: stage k can only be
// reached after stages 1..k-1. Stages feed logs only, never rewards.
class StageTracker {
 public:
  using Pred = std::function<bool(const FactoredState&)>;

  void add(Pred p) { preds_.push_back(std::move(p)); }
  int total() const { return (int)preds_.size(); }
  void reset() { stage_ = 0; }

  int advance(const FactoredState& s) {
    while (stage_ < (int)preds_.size() && preds_[stage_](s)) ++stage_;
    return stage_;
  }
  int stage() const { return stage_; }

 private:
  std::vector<Pred> preds_;
  int stage_ = 0;
};

struct EnvOptions {
  int grid = 10;
  int episode_limit = 0;     // 0: env default
  bool allow_blocked = false;  // paper-faithful impossible initializations
};

std::unique_ptr<FactoredEnv> make_env(const std::string& name, const EnvOptions& opt = {});

std::unique_ptr<FactoredEnv> thawing_env(const EnvOptions& opt = {});
std::unique_ptr<FactoredEnv> carwash_env(const EnvOptions& opt = {});
std::unique_ptr<FactoredEnv> minecraft2d_env(const EnvOptions& opt = {});
std::unique_ptr<FactoredEnv> synthetic_linear_env(int n_factors, double sparsity,
                                                  std::uint64_t seed);

}  // namespace elden::envs
