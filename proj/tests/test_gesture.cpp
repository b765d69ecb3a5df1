#include <algorithm>
#include <map>

#include "doctest.h"
#include "palmctl/gesture.hpp"
#include "palmctl/harness.hpp"
#include "support.hpp"

using namespace palmctl;
using namespace palmctl::gesture;

namespace {

PostureArray pa(std::array<int, 5> bits) { return PostureArray(bits); }

LandmarkSet hand(std::array<int, 5> bits, Handedness hd = Handedness::Right, double cx = 0.5) {
  return harness::hand_template(pa(bits), hd, cx);
}

HandFrame frame_of(std::int64_t t, std::vector<LandmarkSet> hands) {
  HandFrame f;
  f.t_ms = t;
  f.hands = std::move(hands);
  return f;
}

PostureArray random_posture(std::mt19937_64& rng) {
  std::array<int, 5> bits{};
  for (int& b : bits) b = testing::uniform_int(rng, 0, 1);
  return PostureArray(bits);
}

/// Template hand with per-coordinate jitter, far from every decision boundary.
LandmarkSet jittered_hand(std::mt19937_64& rng, const PostureArray& p, Handedness hd) {
  auto lms = harness::hand_template(p, hd, testing::uniform(rng, 0.3, 0.7));
  std::normal_distribution<double> n(0.0, 0.005);
  for (auto& pt : lms.points) {
    pt.x += n(rng);
    pt.y += n(rng);
  }
  return lms;
}

/// Independent first-match lookup.
std::optional<std::string> classify_oracle(const HandPostures& hp, const std::vector<GestureDef>& defs) {
  for (const auto& d : defs) {
    if (const auto* s = std::get_if<SinglePattern>(&d.pattern)) {
      if ((hp.right && *hp.right == s->posture) || (hp.left && *hp.left == s->posture)) return d.name;
    } else {
      const auto& dp = std::get<DoublePattern>(d.pattern);
      if (hp.right && hp.left && *hp.right == dp.right && *hp.left == dp.left) return d.name;
    }
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("finger_state examples") {
  LandmarkSet lms;
  lms[Landmark::IndexMcp] = {0.5, 0.60};
  lms[Landmark::IndexTip] = {0.5, 0.40};
  CHECK(finger_state(lms, Finger::Index) == 1);
  lms[Landmark::IndexTip] = {0.5, 0.70};
  CHECK(finger_state(lms, Finger::Index) == 0);
  lms[Landmark::IndexTip] = {0.5, 0.60};
  CHECK(finger_state(lms, Finger::Index) == 0);
  CHECK_THROWS_AS(finger_state(lms, Finger::Thumb), std::invalid_argument);
}

TEST_CASE("thumb_state examples") {
  LandmarkSet lms;
  lms[Landmark::ThumbMcp] = {0.50, 0.50};
  lms[Landmark::ThumbTip] = {0.60, 0.48};
  CHECK(thumb_state(lms) == 1);
  lms[Landmark::ThumbTip] = {0.52, 0.40};
  CHECK(thumb_state(lms) == 0);
  lms[Landmark::ThumbTip] = {0.50, 0.30};
  CHECK(thumb_state(lms) == 0);
  // steep but wide enough: slope guard
  lms[Landmark::ThumbTip] = {0.45, 0.30};
  CHECK(thumb_state(lms) == 0);
  // leftward lateral thumb counts too
  lms[Landmark::ThumbTip] = {0.40, 0.52};
  CHECK(thumb_state(lms) == 1);
}

TEST_CASE("FingerStateParams validation") {
  CHECK_THROWS_AS((FingerStateParams{0.0, 0.04}.validate()), ConfigError);
  CHECK_THROWS_AS((FingerStateParams{1.0, -1.0}.validate()), ConfigError);
}

TEST_CASE("posture_array examples") {
  CHECK(posture_array(hand({1, 1, 1, 1, 1})) == pa({1, 1, 1, 1, 1}));
  CHECK(posture_array(hand({0, 0, 0, 0, 0})) == pa({0, 0, 0, 0, 0}));
  CHECK(posture_array(hand({0, 1, 0, 0, 0})) == pa({0, 1, 0, 0, 0}));
  for (int bits = 0; bits < 32; ++bits) {
    std::array<int, 5> b{};
    for (int i = 0; i < 5; ++i) b[i] = (bits >> i) & 1;
    CHECK(posture_array(hand(b, Handedness::Right)) == pa(b));
    CHECK(posture_array(hand(b, Handedness::Left)) == pa(b));
  }
}

TEST_CASE("classify examples") {
  const GestureRegistry reg({
      {"TimeOut", DoublePattern{pa({1, 1, 1, 1, 1}), pa({1, 1, 1, 1, 1})}, 5},
      {"Five", SinglePattern{pa({1, 1, 1, 1, 1})}, 5},
      {"One", SinglePattern{pa({0, 1, 0, 0, 0})}, 5},
  });
  CHECK(classify({pa({0, 1, 0, 0, 0}), std::nullopt}, reg) == "One");
  CHECK(classify({std::nullopt, pa({0, 1, 0, 0, 0})}, reg) == "One");
  CHECK_FALSE(classify({}, reg).has_value());
  CHECK(classify({pa({1, 1, 1, 1, 1}), pa({1, 1, 1, 1, 1})}, reg) == "TimeOut");
  CHECK(classify({pa({1, 1, 1, 1, 1}), std::nullopt}, reg) == "Five");
  CHECK_FALSE(classify({pa({0, 0, 1, 0, 0}), std::nullopt}, reg).has_value());
}

TEST_CASE("registry validation and JSON round trip") {
  CHECK_THROWS_AS(GestureRegistry({{"", SinglePattern{}, 5}}), ConfigError);
  CHECK_THROWS_AS(GestureRegistry({{"A", SinglePattern{}, 0}}), ConfigError);
  CHECK_THROWS_AS(GestureRegistry({{"A", SinglePattern{}, 5}, {"A", SinglePattern{pa({1, 0, 0, 0, 0})}, 5}}),
                  ConfigError);
  CHECK_THROWS_AS(GestureRegistry({{"A", SinglePattern{}, 5}, {"B", SinglePattern{}, 5}}), ConfigError);

  const auto reg = default_registry();
  CHECK(reg.size() == 16);
  const auto back = GestureRegistry::from_json(reg.to_json());
  CHECK(back.defs() == reg.defs());
  CHECK_THROWS_AS(GestureRegistry::from_json("[{\"name\":\"A\"}]"), ConfigError);
}

TEST_CASE("step: debounce examples with hold_frames 3") {
  const GestureRegistry reg({
      {"A", SinglePattern{pa({0, 1, 0, 0, 0})}, 3},
      {"B", SinglePattern{pa({0, 1, 1, 0, 0})}, 3},
  });
  const auto a = hand({0, 1, 0, 0, 0});
  const auto b = hand({0, 1, 1, 0, 0});

  SUBCASE("[A,A,A] fires at the third frame with the cursor") {
    EngineState st;
    CHECK(step(st, frame_of(0, {a}), reg).empty());
    CHECK(step(st, frame_of(40, {a}), reg).empty());
    const auto ev = step(st, frame_of(80, {a}), reg);
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].kind == EventKind::Onset);
    CHECK(ev[0].name == "A");
    CHECK(ev[0].onset_ms == 80);
    CHECK(ev[0].cursor == cursor_point(a));
    // holding does not re-fire
    CHECK(step(st, frame_of(120, {a}), reg).empty());
  }
  SUBCASE("[A,A,B] resets the counter") {
    EngineState st;
    CHECK(step(st, frame_of(0, {a}), reg).empty());
    CHECK(step(st, frame_of(40, {a}), reg).empty());
    CHECK(step(st, frame_of(80, {b}), reg).empty());
  }
  SUBCASE("active A then none closes A") {
    EngineState st;
    for (int i = 0; i < 3; ++i) step(st, frame_of(i * 40, {a}), reg);
    const auto ev = step(st, frame_of(200, {}), reg);
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].kind == EventKind::Offset);
    CHECK(ev[0].name == "A");
    CHECK(ev[0].onset_ms == 80);
    CHECK(ev[0].offset_ms == 200);
  }
  SUBCASE("out-of-order timestamps") {
    EngineState st;
    step(st, frame_of(40, {a}), reg);
    CHECK_THROWS_AS(step(st, frame_of(40, {a}), reg), StreamOrderError);
    CHECK_THROWS_AS(step(st, frame_of(0, {a}), reg), StreamOrderError);
  }
}

TEST_CASE("serialize_event") {
  CHECK(serialize_event({EventKind::Onset, "A", 80, std::nullopt, Point2{0.5, 0.25}}) ==
        R"({"event":"onset","name":"A","onset_ms":80,"cursor":[0.5,0.25]})");
  CHECK(serialize_event({EventKind::Offset, "A", 80, 200, std::nullopt}) ==
        R"({"event":"offset","name":"A","onset_ms":80,"offset_ms":200})");
}

TEST_CASE("cursor_point and focal_point examples") {
  LandmarkSet lms;
  lms[Landmark::ThumbTip] = {0.4, 0.6};
  lms[Landmark::IndexTip] = {0.6, 0.4};
  CHECK(cursor_point(lms) == Point2{0.5, 0.5});
  lms[Landmark::ThumbTip] = lms[Landmark::IndexTip] = {0.3, 0.7};
  CHECK(cursor_point(lms) == Point2{0.3, 0.7});
  lms[Landmark::ThumbTip] = {0, 0};
  lms[Landmark::IndexTip] = {1, 1};
  CHECK(cursor_point(lms) == Point2{0.5, 0.5});

  lms[Landmark::MiddleMcp] = {0.5, 0.5};
  CHECK(focal_point(lms) == Point2{0.5, 0.5});
  auto other = lms;
  other[Landmark::MiddleMcp] = {0.2, 0.8};
  CHECK(focal_point(other) == Point2{0.2, 0.8});
  CHECK(focal_point(other) != focal_point(lms));
}

TEST_CASE("property: cursor is the exact midpoint") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 1000; ++i) {
    const auto lms = testing::random_hand(rng, Handedness::Right);
    const auto c = cursor_point(lms);
    const auto p = lms[Landmark::ThumbTip];
    const auto q = lms[Landmark::IndexTip];
    CHECK(c.x == (p.x + q.x) / 2);
    CHECK(c.y == (p.y + q.y) / 2);
  }
}

TEST_CASE("property: posture_array invariant under translation and positive scaling") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = random_posture(rng);
    const auto lms = jittered_hand(rng, p, trial % 2 ? Handedness::Left : Handedness::Right);
    const auto base = posture_array(lms);
    CHECK(base == p);
    CHECK(posture_array(lms) == base);

    const double dx = testing::uniform(rng, -0.3, 0.3);
    const double dy = testing::uniform(rng, -0.3, 0.3);
    const double s = testing::uniform(rng, 0.5, 2.0);
    const Point2 c{testing::uniform(rng), testing::uniform(rng)};
    auto moved = lms;
    auto scaled = lms;
    for (std::size_t i = 0; i < kNumLandmarks; ++i) {
      moved.points[i] = {lms.points[i].x + dx, lms.points[i].y + dy};
      scaled.points[i] = {c.x + s * (lms.points[i].x - c.x), c.y + s * (lms.points[i].y - c.y)};
    }
    CHECK(posture_array(moved) == base);
    CHECK(posture_array(scaled) == base);
  }
}

TEST_CASE("property: classify agrees with first-match oracle under permutation") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 300; ++trial) {
    // distinct random patterns
    std::vector<GestureDef> defs;
    std::vector<std::array<int, 5>> used;
    const int n = testing::uniform_int(rng, 1, 12);
    while (static_cast<int>(defs.size()) < n) {
      const auto r = random_posture(rng);
      const bool dbl = testing::uniform_int(rng, 0, 3) == 0;
      GestureDef d{"g" + std::to_string(defs.size()), SinglePattern{r}, 5};
      if (dbl) d.pattern = DoublePattern{r, random_posture(rng)};
      const bool dup = std::any_of(defs.begin(), defs.end(), [&](const GestureDef& e) { return e.pattern == d.pattern; });
      if (!dup) defs.push_back(d);
    }
    HandPostures hp;
    if (testing::uniform_int(rng, 0, 3)) hp.right = random_posture(rng);
    if (testing::uniform_int(rng, 0, 1)) hp.left = random_posture(rng);

    const auto base = classify(hp, GestureRegistry(defs));
    CHECK(base == classify_oracle(hp, defs));

    for (int k = 0; k < 10; ++k) {
      auto perm = defs;
      std::shuffle(perm.begin(), perm.end(), rng);
      CHECK(classify(hp, GestureRegistry(perm)) == classify_oracle(hp, perm));

      // Moving only non-matching defs never changes the answer.
      std::vector<std::size_t> matching_slots;
      std::vector<GestureDef> non_matching;
      for (std::size_t i = 0; i < defs.size(); ++i) {
        if (classify_oracle(hp, {defs[i]})) {
          matching_slots.push_back(i);
        } else {
          non_matching.push_back(defs[i]);
        }
      }
      std::shuffle(non_matching.begin(), non_matching.end(), rng);
      auto mixed = defs;
      std::size_t next = 0;
      for (std::size_t i = 0; i < mixed.size(); ++i) {
        if (std::find(matching_slots.begin(), matching_slots.end(), i) == matching_slots.end()) {
          mixed[i] = non_matching[next++];
        }
      }
      CHECK(classify(hp, GestureRegistry(mixed)) == base);
    }
  }
}

TEST_CASE("property: debounce safety and onset/offset alternation") {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const int hold = testing::uniform_int(rng, 1, 6);
    const GestureRegistry reg({
        {"A", SinglePattern{pa({0, 1, 0, 0, 0})}, hold},
        {"B", SinglePattern{pa({0, 1, 1, 0, 0})}, hold},
        {"C", SinglePattern{pa({1, 1, 1, 1, 1})}, hold},
    });
    const std::vector<std::vector<LandmarkSet>> choices = {
        {hand({0, 1, 0, 0, 0})}, {hand({0, 1, 1, 0, 0})}, {hand({1, 1, 1, 1, 1})}, {}};

    GestureEngine engine(reg);
    std::vector<int> onset_frames;
    std::map<std::string, int> open;
    const int frames = 400;
    int i = 0;
    while (i < frames) {
      const auto& pick = choices[testing::uniform_int(rng, 0, 3)];
      const int run = testing::uniform_int(rng, 1, 2 * hold + 1);
      for (int r = 0; r < run && i < frames; ++r, ++i) {
        for (const auto& ev : engine.step(frame_of(i * 40, pick))) {
          if (ev.kind == EventKind::Onset) {
            onset_frames.push_back(i);
            CHECK(open[ev.name] == 0);
            ++open[ev.name];
          } else {
            CHECK(open[ev.name] == 1);
            --open[ev.name];
          }
        }
      }
    }
    // Windows anchored at the stream start: at most floor(n / hold) onsets.
    for (int n = 1; n <= frames; ++n) {
      const auto count = std::count_if(onset_frames.begin(), onset_frames.end(), [&](int f) { return f < n; });
      CHECK(count <= n / hold);
    }
    // Consecutive onsets are at least hold frames apart.
    for (std::size_t k = 1; k < onset_frames.size(); ++k) CHECK(onset_frames[k] - onset_frames[k - 1] >= hold);
  }
}
