// CarWash: soak the rag in the sink, clean the car, then wash the rag with
// the soap in the bucket.

#include "grid_core.hpp"

namespace elden::envs {

namespace {

enum Factor {
  kAgentPos = 0,
  kRagPos,
  kRagSoaked,
  kRagClean,
  kSoapPos,
  kCarClean,
  kSinkOn,
  kCarried,  // 0 none, 1 rag, 2 soap
  kBucketPos,
  kShelfPos,
  kCarPos,
  kSinkPos,
  kNumFactors
};

enum Action {
  kGoRag = 0,
  kGoSoap,
  kGoSink,
  kGoCar,
  kGoBucket,
  kGoShelf,
  kPick,
  kDrop,
  kToggleSink,
  kNumActions
};

class CarWashEnv final : public GridEnv {
 public:
  explicit CarWashEnv(const EnvOptions& opt) {
    grid_ = opt.grid;
    limit_ = opt.episode_limit > 0 ? opt.episode_limit : 100;
    allow_blocked_ = opt.allow_blocked;

    const int cells = grid_ * grid_;
    schema_.factors = {
        {"agent.pos", true, cells, 0}, {"rag.pos", true, cells, 0},
        {"rag.soaked", true, 2, 0},    {"rag.clean", true, 2, 0},
        {"soap.pos", true, cells, 0},  {"car.clean", true, 2, 0},
        {"sink.on", true, 2, 0},       {"carried", true, 3, 0},
        {"bucket.pos", true, cells, 0}, {"shelf.pos", true, cells, 0},
        {"car.pos", true, cells, 0},   {"sink.pos", true, cells, 0},
    };
    schema_.action_classes = kNumActions;
    schema_.validate();

    build_rules();

    stages_.add([this](const FactoredState& s) {  // rag off the shelf
      return s.cat[kCarried] == 1 || s.cat[kRagPos] != s.cat[kShelfPos];
    });
    stages_.add([](const FactoredState& s) { return s.cat[kRagPos] == s.cat[kSinkPos]; });
    stages_.add([](const FactoredState& s) { return s.cat[kRagSoaked] == 1; });
    stages_.add([](const FactoredState& s) { return s.cat[kCarClean] == 1; });
    stages_.add([this](const FactoredState& s) {  // soap off the shelf
      return s.cat[kCarried] == 2 || s.cat[kSoapPos] != s.cat[kShelfPos];
    });
    stages_.add([this](const FactoredState& s) { return completed(s); });

    reset(0);
  }

  std::string name() const override { return "carwash"; }

  void reset(std::uint64_t seed) override {
    auto rng = rng::engine(rng::child(seed, "carwash.reset"));
    state_ = FactoredState::zeros(schema_);
    // agent, bucket, shelf, car, sink
    auto cells = random_layout(rng, 5, {1, 2, 3, 4});
    state_.cat[kAgentPos] = cells[0];
    state_.cat[kBucketPos] = cells[1];
    state_.cat[kShelfPos] = cells[2];
    state_.cat[kCarPos] = cells[3];
    state_.cat[kSinkPos] = cells[4];
    state_.cat[kRagPos] = cells[2];   // rag and soap start on the shelf
    state_.cat[kSoapPos] = cells[2];
    state_.cat[kRagSoaked] = 0;
    state_.cat[kRagClean] = 1;
    state_.cat[kCarClean] = 0;
    state_.cat[kSinkOn] = 0;
    state_.cat[kCarried] = 0;
    begin_episode();
  }

  int scripted_action(std::mt19937_64& rng) const override {
    const auto& s = state_;
    const int ap = s.cat[kAgentPos];
    auto near = [&](int f) { return adjacent(ap, s.cat[f]) || ap == s.cat[f]; };

    if (s.cat[kCarClean] == 0 && s.cat[kCarried] == 2) return kDrop;
    if (s.cat[kCarClean] == 0) {
      if (s.cat[kRagSoaked] == 0) {
        if (s.cat[kRagPos] != s.cat[kSinkPos] && s.cat[kCarried] != 1)
          return near(kRagPos) ? kPick : kGoRag;
        if (s.cat[kCarried] == 1) return near(kSinkPos) ? kDrop : kGoSink;
        return near(kSinkPos) ? kToggleSink : kGoSink;  // rag waiting in sink
      }
      if (s.cat[kCarried] != 1) return near(kRagPos) ? kPick : kGoRag;
      return near(kCarPos) ? kDrop : kGoCar;
    }
    if (s.cat[kRagClean] == 0) {
      if (s.cat[kRagPos] != s.cat[kBucketPos] && s.cat[kCarried] != 1)
        return near(kRagPos) ? kPick : kGoRag;
      if (s.cat[kCarried] == 1) return near(kBucketPos) ? kDrop : kGoBucket;
      if (s.cat[kCarried] != 2 && s.cat[kSoapPos] != s.cat[kBucketPos])
        return near(kSoapPos) ? kPick : kGoSoap;
      if (s.cat[kCarried] == 2) return near(kBucketPos) ? kDrop : kGoBucket;
    }
    return (int)(rng() % kNumActions);
  }

 protected:
  bool completed(const FactoredState& s) const override {
    return s.cat[kCarClean] == 1 && s.cat[kRagClean] == 1;
  }

 private:
  const std::vector<int> blockers_{kRagPos, kSoapPos, kBucketPos, kShelfPos, kCarPos, kSinkPos};

  void build_rules() {
    auto add_goto = [this](const char* nm, int target_factor) {
      Rule r;
      r.name = nm;
      r.writes = {kAgentPos, kRagPos, kSoapPos};
      r.guard = [this, target_factor](Ctx& c, int) {
        return placement(c, c.get(target_factor), blockers_).has_value();
      };
      r.effect = [this, target_factor](Ctx& c, Writer& w, int) {
        auto slot = placement(c, c.get(target_factor), blockers_);
        w.set(kAgentPos, slot->cell);
        const int carried = c.get(kCarried);
        if (carried == 1) w.set(kRagPos, slot->cell);
        if (carried == 2) w.set(kSoapPos, slot->cell);
      };
      rules_.push_back(std::move(r));
    };
    add_goto("goto_rag", kRagPos);
    add_goto("goto_soap", kSoapPos);
    add_goto("goto_sink", kSinkPos);
    add_goto("goto_car", kCarPos);
    add_goto("goto_bucket", kBucketPos);
    add_goto("goto_shelf", kShelfPos);

    {
      Rule r;  // picks the rag if reachable, else the soap
      r.name = "pick";
      r.writes = {kCarried, kRagPos, kSoapPos};
      r.guard = [this](Ctx& c, int) {
        if (c.get(kCarried) != 0) return false;
        const int ap = c.get(kAgentPos);
        auto near = [&](int f) {
          const int p = c.get(f);
          return adjacent(ap, p) || ap == p;
        };
        return near(kRagPos) || near(kSoapPos);
      };
      r.effect = [this](Ctx& c, Writer& w, int) {
        const int ap = c.get(kAgentPos);
        const int rp = c.get(kRagPos);
        if (adjacent(ap, rp) || ap == rp) {
          w.set(kCarried, 1);
          w.set(kRagPos, ap);
        } else {
          w.set(kCarried, 2);
          w.set(kSoapPos, ap);
        }
      };
      rules_.push_back(std::move(r));
    }
    {
      Rule r;
      r.name = "drop";
      r.writes = {kCarried, kRagPos, kSoapPos, kRagSoaked, kRagClean, kCarClean};
      r.guard = [](Ctx& c, int) { return c.get(kCarried) != 0; };
      r.effect = [this](Ctx& c, Writer& w, int) {
        const int carried = c.get(kCarried);
        const int ap = c.get(kAgentPos);
        w.set(kCarried, 0);
        if (carried == 1) {
          const int sink = c.get(kSinkPos);
          const int car = c.get(kCarPos);
          const int bucket = c.get(kBucketPos);
          if (adjacent(ap, sink)) {
            w.set(kRagPos, sink);
            if (c.get(kSinkOn) == 1) w.set(kRagSoaked, 1);
          } else if (adjacent(ap, car) && c.get(kRagSoaked) == 1) {
            w.set(kRagPos, car);
            w.set(kCarClean, 1);
            w.set(kRagClean, 0);   // dirt moves into the rag
            w.set(kRagSoaked, 0);
          } else if (adjacent(ap, bucket)) {
            w.set(kRagPos, bucket);
            if (c.get(kSoapPos) == bucket && c.get(kRagClean) == 0) w.set(kRagClean, 1);
          } else {
            w.set(kRagPos, ap);
          }
        } else {
          const int bucket = c.get(kBucketPos);
          if (adjacent(ap, bucket)) {
            w.set(kSoapPos, bucket);
            if (c.get(kRagPos) == bucket && c.get(kRagClean) == 0) w.set(kRagClean, 1);
          } else {
            w.set(kSoapPos, ap);
          }
        }
      };
      rules_.push_back(std::move(r));
    }
    {
      Rule r;
      r.name = "toggle_sink";
      r.writes = {kSinkOn, kRagSoaked};
      r.guard = [this](Ctx& c, int) { return adjacent(c.get(kAgentPos), c.get(kSinkPos)); };
      r.effect = [](Ctx& c, Writer& w, int) {
        const int now_on = 1 - c.get(kSinkOn);
        w.set(kSinkOn, now_on);
        if (now_on == 1 && c.get(kRagPos) == c.get(kSinkPos)) w.set(kRagSoaked, 1);
      };
      rules_.push_back(std::move(r));
    }
    action_rule_ = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  }
};

}  // namespace

std::unique_ptr<FactoredEnv> carwash_env(const EnvOptions& opt) {
  return std::make_unique<CarWashEnv>(opt);
}

}  // namespace elden::envs
