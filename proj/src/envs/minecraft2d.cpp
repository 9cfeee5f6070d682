// 2D Minecraft: craft a rope and a bridge to cross the river, then work up
// the pickaxe tech tree to collect the gem.

#include "grid_core.hpp"

namespace elden::envs {

namespace {

enum Factor {
  kAgentPos = 0,
  kGrass,   // inventory counts, capped at 3
  kWood,
  kStone,
  kRope,
  kBridgeItem,
  kStick,
  kWoodPick,
  kStonePick,
  kGem,
  kBridgeBuilt,
  kGrassPos,
  kWoodPos,
  kStonePos,
  kGemPos,
  kTablePos,
  kRiverPos,
  kNumFactors
};

enum Action {
  kGoGrass = 0,
  kGoWood,
  kGoStone,
  kGoGem,
  kGoTable,
  kGoRiver,
  kPick,
  kApply,
  kCraftRope,
  kCraftBridge,
  kCraftStick,
  kCraftWoodPick,
  kCraftStonePick,
  kNumActions
};

constexpr int kMaxCount = 3;

class Minecraft2DEnv final : public GridEnv {
 public:
  explicit Minecraft2DEnv(const EnvOptions& opt) {
    grid_ = opt.grid;
    limit_ = opt.episode_limit > 0 ? opt.episode_limit : 100;
    allow_blocked_ = opt.allow_blocked;

    const int cells = grid_ * grid_;
    auto inv = [](const char* n) { return FactorSpec{n, true, kMaxCount + 1, 0}; };
    schema_.factors = {
        {"agent.pos", true, cells, 0},
        inv("inv.grass"), inv("inv.wood"), inv("inv.stone"), inv("inv.rope"),
        inv("inv.bridge"), inv("inv.stick"), inv("inv.wood_pickaxe"),
        inv("inv.stone_pickaxe"), inv("inv.gem"),
        {"bridge.built", true, 2, 0},
        {"grass.pos", true, cells, 0}, {"wood.pos", true, cells, 0},
        {"stone.pos", true, cells, 0}, {"gem.pos", true, cells, 0},
        {"table.pos", true, cells, 0}, {"river.pos", true, cells, 0},
    };
    schema_.action_classes = kNumActions;
    schema_.validate();

    build_rules();

    auto have = [](int f) {
      return [f](const FactoredState& s) { return s.cat[f] >= 1; };
    };
    stages_.add(have(kRope));
    stages_.add(have(kBridgeItem));
    stages_.add([](const FactoredState& s) { return s.cat[kBridgeBuilt] == 1; });
    stages_.add(have(kStick));
    stages_.add(have(kWoodPick));
    stages_.add(have(kStone));
    stages_.add(have(kStonePick));
    stages_.add(have(kGem));

    reset(0);
  }

  std::string name() const override { return "minecraft2d"; }

  void reset(std::uint64_t seed) override {
    auto rng = rng::engine(rng::child(seed, "minecraft.reset"));
    state_ = FactoredState::zeros(schema_);
    // agent, grass, wood, stone, gem, table, river
    auto cells = random_layout(rng, 7, {1, 2, 3, 4, 5, 6});
    state_.cat[kAgentPos] = cells[0];
    state_.cat[kGrassPos] = cells[1];
    state_.cat[kWoodPos] = cells[2];
    state_.cat[kStonePos] = cells[3];
    state_.cat[kGemPos] = cells[4];
    state_.cat[kTablePos] = cells[5];
    state_.cat[kRiverPos] = cells[6];
    for (int f = kGrass; f <= kGem; ++f) state_.cat[f] = 0;
    state_.cat[kBridgeBuilt] = 0;
    begin_episode();
  }

  int scripted_action(std::mt19937_64& rng) const override {
    const auto& s = state_;
    const int ap = s.cat[kAgentPos];
    auto near = [&](int f) { return adjacent(ap, s.cat[f]); };
    auto go_get = [&](int pos_factor, int go_action) {
      return near(pos_factor) ? kPick : go_action;
    };
    auto craft_at_table = [&](int craft_action) {
      return near(kTablePos) ? craft_action : kGoTable;
    };

    if (s.cat[kBridgeBuilt] == 0) {
      if (s.cat[kBridgeItem] >= 1) return near(kRiverPos) ? kApply : kGoRiver;
      if (s.cat[kRope] >= 1)
        return s.cat[kWood] >= 1 ? craft_at_table(kCraftBridge) : go_get(kWoodPos, kGoWood);
      if (s.cat[kGrass] >= 1) return craft_at_table(kCraftRope);
      return go_get(kGrassPos, kGoGrass);
    }
    if (s.cat[kWoodPick] == 0) {
      if (s.cat[kStick] >= 1 && s.cat[kWood] >= 1) return craft_at_table(kCraftWoodPick);
      if (s.cat[kStick] == 0 && s.cat[kWood] >= 1) return craft_at_table(kCraftStick);
      return go_get(kWoodPos, kGoWood);
    }
    if (s.cat[kStonePick] == 0) {
      if (s.cat[kStick] >= 1 && s.cat[kStone] >= 1) return craft_at_table(kCraftStonePick);
      if (s.cat[kStick] == 0) {
        if (s.cat[kWood] >= 1) return craft_at_table(kCraftStick);
        return go_get(kWoodPos, kGoWood);
      }
      return go_get(kStonePos, kGoStone);
    }
    if (s.cat[kGem] == 0) return go_get(kGemPos, kGoGem);
    return (int)(rng() % kNumActions);
  }

 protected:
  bool completed(const FactoredState& s) const override { return s.cat[kGem] >= 1; }

 private:
  const std::vector<int> blockers_{kGrassPos, kWoodPos, kStonePos, kGemPos, kTablePos,
                                   kRiverPos};

  void add_craft(const char* nm, int out, std::vector<std::pair<int, int>> needs) {
    Rule r;
    r.name = nm;
    r.writes = {out};
    for (auto [f, q] : needs) r.writes.push_back(f);
    r.guard = [this, needs, out](Ctx& c, int) {
      if (!adjacent(c.get(kAgentPos), c.get(kTablePos))) return false;
      if (c.get(out) >= kMaxCount) return false;
      for (auto [f, q] : needs)
        if (c.get(f) < q) return false;
      return true;
    };
    r.effect = [needs, out](Ctx& c, Writer& w, int) {
      w.set(out, c.get(out) + 1);
      for (auto [f, q] : needs) w.set(f, c.get(f) - q);
    };
    rules_.push_back(std::move(r));
  }

  void build_rules() {
    auto add_goto = [this](const char* nm, int target_factor, bool needs_bridge) {
      Rule r;
      r.name = nm;
      r.writes = {kAgentPos};
      r.guard = [this, target_factor, needs_bridge](Ctx& c, int) {
        if (needs_bridge && c.get(kBridgeBuilt) == 0) return false;  // across the river
        return placement(c, c.get(target_factor), blockers_).has_value();
      };
      r.effect = [this, target_factor](Ctx& c, Writer& w, int) {
        auto slot = placement(c, c.get(target_factor), blockers_);
        w.set(kAgentPos, slot->cell);
      };
      rules_.push_back(std::move(r));
    };
    add_goto("goto_grass", kGrassPos, false);
    add_goto("goto_wood", kWoodPos, false);
    add_goto("goto_stone", kStonePos, false);
    add_goto("goto_gem", kGemPos, true);
    add_goto("goto_table", kTablePos, false);
    add_goto("goto_river", kRiverPos, false);

    {
      Rule r;  // harvest whatever resource the agent stands next to
      r.name = "pick";
      r.writes = {kGrass, kWood, kStone, kGem};
      r.guard = [this](Ctx& c, int) {
        const int ap = c.get(kAgentPos);
        if (adjacent(ap, c.get(kGrassPos)) && c.get(kGrass) < kMaxCount) return true;
        if (adjacent(ap, c.get(kWoodPos)) && c.get(kWood) < kMaxCount) return true;
        if (adjacent(ap, c.get(kStonePos)) && c.get(kWoodPick) >= 1 && c.get(kStone) < kMaxCount)
          return true;
        if (adjacent(ap, c.get(kGemPos)) && c.get(kStonePick) >= 1 &&
            c.get(kBridgeBuilt) == 1 && c.get(kGem) < kMaxCount)
          return true;
        return false;
      };
      r.effect = [this](Ctx& c, Writer& w, int) {
        const int ap = c.get(kAgentPos);
        if (adjacent(ap, c.get(kGrassPos)) && c.get(kGrass) < kMaxCount) {
          w.set(kGrass, c.get(kGrass) + 1);
        } else if (adjacent(ap, c.get(kWoodPos)) && c.get(kWood) < kMaxCount) {
          w.set(kWood, c.get(kWood) + 1);
        } else if (adjacent(ap, c.get(kStonePos)) && c.get(kWoodPick) >= 1 &&
                   c.get(kStone) < kMaxCount) {
          w.set(kStone, c.get(kStone) + 1);
        } else {
          w.set(kGem, c.get(kGem) + 1);
        }
      };
      rules_.push_back(std::move(r));
    }
    {
      Rule r;  // build the bridge over the river
      r.name = "apply";
      r.writes = {kBridgeBuilt, kBridgeItem};
      r.guard = [this](Ctx& c, int) {
        return adjacent(c.get(kAgentPos), c.get(kRiverPos)) && c.get(kBridgeItem) >= 1 &&
               c.get(kBridgeBuilt) == 0;
      };
      r.effect = [](Ctx& c, Writer& w, int) {
        w.set(kBridgeBuilt, 1);
        w.set(kBridgeItem, c.get(kBridgeItem) - 1);
      };
      rules_.push_back(std::move(r));
    }
    add_craft("craft_rope", kRope, {{kGrass, 1}});
    add_craft("craft_bridge", kBridgeItem, {{kWood, 1}, {kRope, 1}});
    add_craft("craft_stick", kStick, {{kWood, 1}});
    add_craft("craft_wood_pickaxe", kWoodPick, {{kWood, 1}, {kStick, 1}});
    add_craft("craft_stone_pickaxe", kStonePick, {{kStone, 1}, {kStick, 1}});

    action_rule_.resize(kNumActions);
    for (int a = 0; a < kNumActions; ++a) action_rule_[a] = a;
  }
};

}  // namespace

std::unique_ptr<FactoredEnv> minecraft2d_env(const EnvOptions& opt) {
  return std::make_unique<Minecraft2DEnv>(opt);
}

}  // namespace elden::envs
