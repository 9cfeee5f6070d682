// Thawing: open the fridge, take the frozen fish out, put it into the sink.

#include "grid_core.hpp"

namespace elden::envs {

namespace {

enum Factor {
  kAgentPos = 0,
  kAgentDir,
  kFishPos,
  kFishThawed,
  kFridgeOpen,
  kSinkPos,
  kFridgePos,
  kCarried,
  kNumFactors
};

enum Action {
  kGoFish = 0,
  kGoSink,
  kGoFridge,
  kPick,
  kDrop,
  kOpen,
  kClose,
  kNumActions
};

class ThawingEnv final : public GridEnv {
 public:
  explicit ThawingEnv(const EnvOptions& opt) {
    grid_ = opt.grid;
    limit_ = opt.episode_limit > 0 ? opt.episode_limit : 20;
    allow_blocked_ = opt.allow_blocked;

    const int cells = grid_ * grid_;
    schema_.factors = {
        {"agent.pos", true, cells, 0},  {"agent.dir", true, 4, 0},
        {"fish.pos", true, cells, 0},   {"fish.thawed", true, 2, 0},
        {"fridge.open", true, 2, 0},    {"sink.pos", true, cells, 0},
        {"fridge.pos", true, cells, 0}, {"carried", true, 2, 0},
    };
    schema_.action_classes = kNumActions;
    schema_.validate();

    build_rules();

    stages_.add([](const FactoredState& s) { return s.cat[kFridgeOpen] == 1; });
    stages_.add([](const FactoredState& s) { return s.cat[kCarried] == 1; });
    stages_.add([this](const FactoredState& s) { return completed(s); });

    reset(0);
  }

  std::string name() const override { return "thawing"; }

  void reset(std::uint64_t seed) override {
    auto rng = rng::engine(rng::child(seed, "thawing.reset"));
    state_ = FactoredState::zeros(schema_);
    auto cells = random_layout(rng, 3, {1, 2});  // agent, sink, fridge
    state_.cat[kAgentPos] = cells[0];
    state_.cat[kSinkPos] = cells[1];
    state_.cat[kFridgePos] = cells[2];
    state_.cat[kFishPos] = cells[2];  // frozen fish starts inside the fridge
    state_.cat[kAgentDir] = (int)(rng() % 4);
    state_.cat[kFishThawed] = 0;
    state_.cat[kFridgeOpen] = 0;
    state_.cat[kCarried] = 0;
    begin_episode();
  }

  int scripted_action(std::mt19937_64& rng) const override {
    const auto& s = state_;
    const int ap = s.cat[kAgentPos];
    if (s.cat[kFridgeOpen] == 0)
      return adjacent(ap, s.cat[kFridgePos]) ? kOpen : kGoFridge;
    if (s.cat[kCarried] == 0 && !completed(s)) {
      const int fp = s.cat[kFishPos];
      return (adjacent(ap, fp) || ap == fp) ? kPick : kGoFish;
    }
    if (s.cat[kCarried] == 1)
      return adjacent(ap, s.cat[kSinkPos]) ? kDrop : kGoSink;
    return (int)(rng() % kNumActions);
  }

 protected:
  bool completed(const FactoredState& s) const override {
    return s.cat[kFishThawed] == 1 && s.cat[kFishPos] == s.cat[kSinkPos];
  }

 private:
  const std::vector<int> blockers_{kFishPos, kSinkPos, kFridgePos};

  void build_rules() {
    auto add_goto = [this](const char* nm, int target_factor) {
      Rule r;
      r.name = nm;
      r.writes = {kAgentPos, kAgentDir, kFishPos};
      r.guard = [this, target_factor](Ctx& c, int) {
        return placement(c, c.get(target_factor), blockers_).has_value();
      };
      r.effect = [this, target_factor](Ctx& c, Writer& w, int) {
        auto slot = placement(c, c.get(target_factor), blockers_);
        w.set(kAgentPos, slot->cell);
        w.set(kAgentDir, slot->facing);
        if (c.get(kCarried) == 1) w.set(kFishPos, slot->cell);
      };
      rules_.push_back(std::move(r));
    };
    add_goto("goto_fish", kFishPos);
    add_goto("goto_sink", kSinkPos);
    add_goto("goto_fridge", kFridgePos);

    {
      Rule r;
      r.name = "pick_fish";
      r.writes = {kCarried, kFishPos};
      r.guard = [this](Ctx& c, int) {
        if (c.get(kCarried) != 0) return false;
        const int ap = c.get(kAgentPos), fp = c.get(kFishPos);
        if (!(adjacent(ap, fp) || ap == fp)) return false;
        if (fp == c.get(kFridgePos) && c.get(kFridgeOpen) == 0) return false;
        return true;
      };
      r.effect = [](Ctx& c, Writer& w, int) {
        w.set(kCarried, 1);
        w.set(kFishPos, c.get(kAgentPos));
      };
      rules_.push_back(std::move(r));
    }
    {
      Rule r;
      r.name = "drop_fish";
      r.writes = {kCarried, kFishPos, kFishThawed};
      r.guard = [](Ctx& c, int) { return c.get(kCarried) == 1; };
      r.effect = [this](Ctx& c, Writer& w, int) {
        w.set(kCarried, 0);
        const int ap = c.get(kAgentPos), sp = c.get(kSinkPos);
        if (adjacent(ap, sp)) {
          w.set(kFishPos, sp);
          w.set(kFishThawed, 1);  // water thaws the fish
        } else {
          w.set(kFishPos, ap);
        }
      };
      rules_.push_back(std::move(r));
    }
    {
      Rule r;
      r.name = "open_fridge";
      r.writes = {kFridgeOpen};
      r.guard = [this](Ctx& c, int) {
        return c.get(kFridgeOpen) == 0 && adjacent(c.get(kAgentPos), c.get(kFridgePos));
      };
      r.effect = [](Ctx&, Writer& w, int) { w.set(kFridgeOpen, 1); };
      rules_.push_back(std::move(r));
    }
    {
      Rule r;
      r.name = "close_fridge";
      r.writes = {kFridgeOpen};
      r.guard = [this](Ctx& c, int) {
        return c.get(kFridgeOpen) == 1 && adjacent(c.get(kAgentPos), c.get(kFridgePos));
      };
      r.effect = [](Ctx&, Writer& w, int) { w.set(kFridgeOpen, 0); };
      rules_.push_back(std::move(r));
    }
    action_rule_ = {0, 1, 2, 3, 4, 5, 6};
  }
};

}  // namespace

std::unique_ptr<FactoredEnv> thawing_env(const EnvOptions& opt) {
  return std::make_unique<ThawingEnv>(opt);
}

}  // namespace elden::envs
