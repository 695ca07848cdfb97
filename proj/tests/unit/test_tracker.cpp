#include "objmap/error.hpp"
#include "objmap/tracker.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace objmap;

namespace {

constexpr std::uint64_t kSec = 1000000;

FusedObject fused(const Vec3& t, std::uint16_t cls = 1) {
  FusedObject f;
  f.class_id = cls;
  f.pose = Pose(t, Quat::Identity());
  f.sensors = {0};
  return f;
}

TrackedObject track_at(const Vec3& p, std::uint64_t last_seen, std::uint16_t cls = 1) {
  TrackedObject t;
  t.class_id = cls;
  t.pose = Pose(p, Quat::Identity());
  t.last_seen_us = last_seen;
  t.history.push_back({last_seen, p});
  return t;
}

}  // namespace

TEST(Predict, Examples) {
  TrackedObject t = track_at(Vec3(1, 2, 0), 5 * kSec);
  EXPECT_EQ(predict(t, 9 * kSec), Vec3(1, 2, 0));
  t.velocity = Vec3(1, 0, 0);
  EXPECT_LT((predict(t, 7 * kSec) - Vec3(3, 2, 0)).norm(), 1e-12);
  // Prediction never runs backwards in time.
  EXPECT_EQ(predict(t, 4 * kSec), Vec3(1, 2, 0));
}

TEST(Predict, WindowSlopeFromHistory) {
  TrackedObject t;
  t.history = {{0, Vec3(0, 0, 0)}, {kSec, Vec3(0.5, 0, 0)}, {2 * kSec, Vec3(1.0, 0, 0)}};
  t.velocity = window_velocity(t.history);
  t.pose = Pose(Vec3(1.0, 0, 0), Quat::Identity());
  t.last_seen_us = 2 * kSec;
  EXPECT_NEAR(t.velocity.x(), 0.5, 1e-12);
  EXPECT_NEAR(predict(t, 3 * kSec).x(), 1.5, 1e-12);
  const std::deque<std::pair<std::uint64_t, Vec3>> single{{0, Vec3(1, 1, 1)}};
  EXPECT_EQ(window_velocity(single), Vec3::Zero());
}

TEST(Associate, Examples) {
  std::vector<TrackedObject> tracks{track_at(Vec3(0, 0, 0), 0)};
  std::vector<FusedObject> objs{fused(Vec3(0.1, 0, 0))};
  auto a = associate(tracks, objs, kSec, 0.75);
  ASSERT_EQ(a.matches.size(), 1u);
  EXPECT_TRUE(a.unmatched_objects.empty());

  objs = {fused(Vec3(2, 0, 0))};
  a = associate(tracks, objs, kSec, 0.75);
  EXPECT_TRUE(a.matches.empty());
  EXPECT_EQ(a.unmatched_objects, std::vector<std::size_t>{0});
  EXPECT_EQ(a.unmatched_tracks, std::vector<std::size_t>{0});

  objs = {fused(Vec3(0.1, 0, 0), 2)};
  EXPECT_TRUE(associate(tracks, objs, kSec, 0.75).matches.empty());
}

TEST(Associate, GlobalGreedyOnCrossingMatrix) {
  // Predicted positions on the x axis; distances
  // track0: obj0 0.1, obj1 0.6 ; track1: obj0 0.5, obj1 0.2.
  std::vector<TrackedObject> tracks{track_at(Vec3(0.0, 0, 0), 0), track_at(Vec3(0.6, 0, 0), 0)};
  std::vector<FusedObject> objs{fused(Vec3(0.1, 0, 0)), fused(Vec3(0.6, 0.2, 0))};
  const auto a = associate(tracks, objs, 0, 0.75);
  ASSERT_EQ(a.matches.size(), 2u);
  EXPECT_EQ(a.matches[0], (std::pair<std::size_t, std::size_t>{0, 0}));
  EXPECT_EQ(a.matches[1], (std::pair<std::size_t, std::size_t>{1, 1}));
}

TEST(Associate, MatchesBruteForceGreedyOracle) {
  Rng rng(61);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<TrackedObject> tracks;
    std::vector<FusedObject> objs;
    const std::size_t nt = rng.below(6);
    const std::size_t no = rng.below(6);
    for (std::size_t i = 0; i < nt; ++i) {
      tracks.push_back(track_at(objmap::test::random_vec(rng, -1, 1), 0, static_cast<std::uint16_t>(1 + rng.below(2))));
    }
    for (std::size_t i = 0; i < no; ++i) {
      objs.push_back(fused(objmap::test::random_vec(rng, -1, 1), static_cast<std::uint16_t>(1 + rng.below(2))));
    }
    const double tau = 0.75;
    // Oracle: repeatedly take the smallest remaining valid pair.
    std::vector<bool> tu(nt, false);
    std::vector<bool> ou(no, false);
    std::set<std::pair<std::size_t, std::size_t>> expect;
    while (true) {
      double best = INFINITY;
      std::pair<std::size_t, std::size_t> arg{0, 0};
      for (std::size_t t = 0; t < nt; ++t) {
        for (std::size_t o = 0; o < no; ++o) {
          if (tu[t] || ou[o] || tracks[t].class_id != objs[o].class_id) continue;
          const double d = (tracks[t].pose.t() - objs[o].pose.t()).norm();
          if (d <= tau && d < best) {
            best = d;
            arg = {t, o};
          }
        }
      }
      if (!std::isfinite(best)) break;
      tu[arg.first] = ou[arg.second] = true;
      expect.insert(arg);
    }
    const auto a = associate(tracks, objs, 0, tau);
    const std::set<std::pair<std::size_t, std::size_t>> got(a.matches.begin(), a.matches.end());
    EXPECT_EQ(got, expect);
    EXPECT_EQ(a.unmatched_objects.size() + a.matches.size(), no);
    EXPECT_EQ(a.unmatched_tracks.size() + a.matches.size(), nt);
  }
}

TEST(Tracker, NewTrackAndMatchedUpdate) {
  Tracker tr;
  const std::vector<FusedObject> first{fused(Vec3(0, 0, 0))};
  tr.step(first, 0);
  ASSERT_EQ(tr.tracks().size(), 1u);
  EXPECT_EQ(tr.tracks()[0].hits, 1u);
  EXPECT_EQ(tr.tracks()[0].velocity, Vec3::Zero());
  EXPECT_TRUE(tr.confirmed_tracks().empty());
  const std::vector<FusedObject> second{fused(Vec3(0.2, 0, 0))};
  tr.step(second, kSec);
  ASSERT_EQ(tr.tracks().size(), 1u);
  EXPECT_EQ(tr.tracks()[0].hits, 2u);
  EXPECT_EQ(tr.tracks()[0].last_seen_us, kSec);
  EXPECT_NEAR(tr.tracks()[0].velocity.x(), 0.2, 1e-12);
  EXPECT_EQ(tr.confirmed_tracks().size(), 1u);
}

TEST(Tracker, StraightLineKeepsOneTrackAndEstimatesSpeed) {
  Tracker tr;
  const double speed = 0.5;
  for (int k = 0; k < 60; ++k) {
    const std::vector<FusedObject> objs{fused(Vec3(speed * k, 1.0, 0))};
    tr.step(objs, static_cast<std::uint64_t>(k) * kSec);
    ASSERT_EQ(tr.tracks().size(), 1u);
    EXPECT_EQ(tr.tracks()[0].id, 1u);
  }
  EXPECT_NEAR(tr.tracks()[0].velocity.norm(), speed, 0.05 * speed);
}

TEST(Tracker, CleanupRemovesStaleTracks) {
  TrackerConfig cfg;
  Tracker tr(cfg);
  const std::vector<FusedObject> objs{fused(Vec3(0, 0, 0))};
  tr.step(objs, 0);
  tr.cleanup(kSec);
  EXPECT_EQ(tr.tracks().size(), 1u);
  tr.cleanup(10 * kSec);
  EXPECT_EQ(tr.tracks().size(), 1u);  // exactly max_unseen is kept
  tr.cleanup(20 * kSec);
  EXPECT_TRUE(tr.tracks().empty());
}

TEST(Tracker, OcclusionGapKeepsIdentity) {
  Tracker tr;
  for (int k = 0; k < 20; ++k) {
    std::vector<FusedObject> objs;
    if (k < 8 || k > 10) objs.push_back(fused(Vec3(0.2 * k, 0, 0)));  // 3 s gap
    tr.step(objs, static_cast<std::uint64_t>(k) * kSec);
  }
  ASSERT_EQ(tr.tracks().size(), 1u);
  EXPECT_EQ(tr.tracks()[0].id, 1u);
}

TEST(Tracker, IdsAreNeverReused) {
  Tracker tr;
  std::set<std::uint64_t> seen;
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    std::vector<FusedObject> objs;
    const std::size_t n = rng.below(4);
    for (std::size_t i = 0; i < n; ++i) objs.push_back(fused(objmap::test::random_vec(rng, -5, 5)));
    tr.step(objs, static_cast<std::uint64_t>(k) * 5 * kSec);
    for (const auto& t : tr.tracks()) seen.insert(t.id);
  }
  std::set<std::uint64_t> live;
  for (const auto& t : tr.tracks()) EXPECT_TRUE(live.insert(t.id).second);
  EXPECT_EQ(*seen.rbegin(), seen.size());  // monotonic counter, 1..N
}

TEST(Tracker, IntegratesSubMapsFromMergedClusters) {
  TrackerConfig cfg;
  cfg.integrate_submaps = true;
  cfg.tau_occ = 1;
  Tracker tr(cfg);
  FusedObject f = fused(Vec3(1, 0, 0));
  CloudPoint p;
  p.xyz = Vec3(1.01, 0.01, 0.01);
  f.merged_cluster = std::vector<CloudPoint>{p};
  const std::vector<FusedObject> objs{f};
  tr.step(objs, 0);
  ASSERT_TRUE(tr.tracks()[0].submap.has_value());
  const auto occ = tr.tracks()[0].submap->occupied_indices();
  ASSERT_EQ(occ.size(), 1u);
  EXPECT_EQ(occ[0], (VoxelIndex{0, 0, 0}));
}

TEST(TrackerConfig, Validation) {
  TrackerConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.tau_track = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = TrackerConfig{};
  cfg.window = 0;
  EXPECT_THROW(cfg.validate(), Error);
}
