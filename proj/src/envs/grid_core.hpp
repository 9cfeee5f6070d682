#pragma once

// Shared machinery for the discrete gridworld environments: transition rules
// with tracked factor reads, actual-write recording, and the ground-truth
// edge semantics.
//
// Edge semantics per step, for the single rule bound to the action:
//   - every factor the rule actually wrote gets an edge from each tracked
//     read and from the action;
//   - declared-but-unwritten targets get the same edges (a nearby change in
//     a read factor could have made the write happen: but-for) plus the
//     persistence self-edge;
//   - every other factor gets only the persistence self-edge.

#include <algorithm>
#include <cassert>
#include <optional>

#include "elden/envs/factored_env.hpp"

namespace elden::envs {

class GridEnv : public FactoredEnv {
 public:
  const FactorSchema& schema() const override { return schema_; }
  int episode_limit() const override { return limit_; }
  int num_stages() const override { return stages_.total(); }
  const FactoredState& state() const override { return state_; }

  // Pure transition function; used directly by the but-for soundness check.
  StepResult simulate(const FactoredState& s, int action) const {
    if (action < 0 || action >= schema_.action_classes)
      throw std::invalid_argument(name() + ": invalid action index " +
                                  std::to_string(action));
    const int n = schema_.num_factors();
    StepResult r;
    r.next = s;
    r.graph = EdgeMatrix::for_factors(n);

    Ctx ctx{s, std::vector<std::uint8_t>((std::size_t)n, 0)};
    Writer wr{r.next, std::vector<std::uint8_t>((std::size_t)n, 0)};

    const Rule& rule = rules_[action_rule_[action]];
    bool fired = rule.guard(ctx, action);
    if (fired) rule.effect(ctx, wr, action);

    for (int j : rule.writes) {
      for (int i = 0; i < n; ++i)
        if (ctx.reads[i]) r.graph.at(i, j) = 1;
      r.graph.at(n, j) = 1;  // action row
      if (!wr.written[j]) r.graph.at(j, j) = 1;
    }
    for (int j = 0; j < n; ++j) {
      bool declared = std::find(rule.writes.begin(), rule.writes.end(), j) != rule.writes.end();
      if (!declared) r.graph.at(j, j) = 1;
    }

    r.done = completed(r.next);
    r.task_reward = (r.done && !completed(s)) ? 1.0 : 0.0;
    return r;
  }

  StepResult step(int action) override {
    StepResult r = simulate(state_, action);
    state_ = r.next;
    ++steps_;
    max_stage_ = stages_.advance(state_);
    r.stage = max_stage_;
    if (steps_ >= limit_) r.done = true;
    return r;
  }

 protected:
  struct Ctx {
    const FactoredState& s;
    std::vector<std::uint8_t> reads;
    int get(int f) {
      reads[f] = 1;
      return s.cat[f];
    }
  };
  struct Writer {
    FactoredState& next;
    std::vector<std::uint8_t> written;
    void set(int f, int v) {
      next.cat[f] = v;
      written[f] = 1;
    }
  };
  struct Rule {
    std::string name;
    std::vector<int> writes;
    std::function<bool(Ctx&, int)> guard;
    std::function<void(Ctx&, Writer&, int)> effect;
  };

  FactorSchema schema_;
  FactoredState state_;
  StageTracker stages_;
  std::vector<Rule> rules_;
  std::vector<int> action_rule_;  // action -> rule index
  int grid_ = 10;
  int limit_ = 100;
  bool allow_blocked_ = false;

  virtual bool completed(const FactoredState& s) const = 0;

  void begin_episode() {
    steps_ = 0;
    stages_.reset();
    max_stage_ = stages_.advance(state_);
  }

  // -- grid helpers --------------------------------------------------------
  int cell(int x, int y) const { return y * grid_ + x; }
  int cx(int c) const { return c % grid_; }
  int cy(int c) const { return c / grid_; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < grid_ && y >= 0 && y < grid_; }

  bool adjacent(int ca, int cb) const {
    return std::abs(cx(ca) - cx(cb)) + std::abs(cy(ca) - cy(cb)) == 1;
  }

  // The four von-Neumann neighbors in fixed order (N, E, S, W) and the
  // direction the agent faces when standing there looking at the target.
  struct Slot {
    int cell;
    int facing;
  };
  std::vector<Slot> neighbor_slots(int target) const {
    static constexpr int dx[4] = {0, 1, 0, -1};
    static constexpr int dy[4] = {-1, 0, 1, 0};
    static constexpr int face[4] = {2, 3, 0, 1};  // stand N -> face S, etc.
    std::vector<Slot> out;
    for (int k = 0; k < 4; ++k) {
      int x = cx(target) + dx[k], y = cy(target) + dy[k];
      if (in_bounds(x, y)) out.push_back({cell(x, y), face[k]});
    }
    return out;
  }

  // Occupancy test that reads every listed entity position through the
  // tracked context.
  bool occupied(Ctx& ctx, int c, const std::vector<int>& entity_pos_factors) const {
    bool occ = false;
    for (int f : entity_pos_factors)
      if (ctx.get(f) == c) occ = true;  // no short-circuit: read them all
    return occ;
  }

  // First free neighbor slot of the tracked target position, or nullopt.
  std::optional<Slot> placement(Ctx& ctx, int target_cell,
                                const std::vector<int>& blockers) const {
    for (const Slot& sl : neighbor_slots(target_cell))
      if (!occupied(ctx, sl.cell, blockers)) return sl;
    return std::nullopt;
  }

  // Distinct random cells at reset; entities that must be reachable keep at
  // least one free neighbor, otherwise the layout is redrawn.
  std::vector<int> random_layout(std::mt19937_64& rng, int count,
                                 const std::vector<int>& need_free_neighbor) {
    std::uniform_int_distribution<int> uc(0, grid_ * grid_ - 1);
    for (int attempt = 0; attempt < 500; ++attempt) {
      std::vector<int> cells;
      while ((int)cells.size() < count) {
        int c = uc(rng);
        if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
      }
      if (allow_blocked_) return cells;
      bool ok = true;
      for (int idx : need_free_neighbor) {
        bool free_slot = false;
        for (const Slot& sl : neighbor_slots(cells[idx]))
          if (std::find(cells.begin(), cells.end(), sl.cell) == cells.end()) free_slot = true;
        if (!free_slot) ok = false;
      }
      if (ok) return cells;
    }
    throw std::runtime_error(name() + ": could not draw an unblocked layout");
  }
};

}  // namespace elden::envs
