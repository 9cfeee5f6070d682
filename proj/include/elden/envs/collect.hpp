#pragma once

#include <string>
#include <vector>

#include "elden/envs/factored_env.hpp"
#include "elden/schema.hpp"

namespace elden::envs {

struct Dataset {
  std::string env_name;
  int grid = 0;
  std::uint64_t seed = 0;
  FactorSchema schema;
  std::vector<TransitionRecord> records;
};

// Epsilon-greedy scripted collection: with probability 0.5 a uniform random
// primitive, otherwise the next stage-advancing primitive.
Dataset scripted_collect(FactoredEnv& env, std::size_t n_transitions, std::uint64_t seed,
                         double epsilon = 0.5);

// Versioned record stream: one JSON header line, then fixed-width binary
// records (state, action, next state, reward, done, packed ground-truth
// edge bitmap, stage).
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

}  // namespace elden::envs
