#include "gesturegen/data/dataset.hpp"
#include "gesturegen/data/synth.hpp"
#include "gesturegen/metrics/kinematic.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <set>

using namespace gesturegen;
using namespace gesturegen::data;

namespace {

SampleRecord motion_of_length(int frames, const std::string& id) {
  std::mt19937_64 rng(frames);
  auto r = synth_motion(id, rng, frames, frames);
  EXPECT_EQ(r.motion.frames(), frames);
  return r;
}

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("clip" + std::to_string(i));
  return out;
}

}  // namespace

// ---- ingest -----------------------------------------------------------------------

TEST(Ingest, LengthFilterTruncationAndCorruptFiles) {
  const auto dir = testsupport::temp_dir("ingest");
  write_corpus(dir, {motion_of_length(30, "short"), motion_of_length(120, "mid"), motion_of_length(180, "edge"),
                     testsupport::gesture_record(1, "talk")});
  std::ofstream(dir / "broken.motion") << "not a container";
  const auto res = ingest({dir}, DatasetSpec{});
  ASSERT_EQ(res.errors.size(), 1u);
  EXPECT_NE(res.errors[0].path.find("broken.motion"), std::string::npos);
  EXPECT_EQ(res.filtered, 1);
  ASSERT_EQ(res.records.size(), 3u);
  EXPECT_EQ(res.records[0].clip_id, "edge");
  EXPECT_EQ(res.records[1].clip_id, "mid");
  EXPECT_EQ(res.records[2].clip_id, "talk");
  for (const auto& r : res.records) {
    EXPECT_EQ(r.motion.frames(), 180);
    EXPECT_EQ(r.valid.size(), 180u);
    EXPECT_DOUBLE_EQ(r.motion.fps, 20.0);
  }
  EXPECT_EQ(res.records[1].real_frames(), 120);
  EXPECT_EQ(res.records[0].real_frames(), 180);
}

TEST(Ingest, LongGestureClipIsResampledAndTruncated) {
  std::mt19937_64 rng(3);
  auto g = synth_gesture("g", rng, 15.0);  // 450 frames at 30 fps = 300 at 20 fps
  ASSERT_TRUE(g.audio);
  ASSERT_TRUE(normalize_record(g, DatasetSpec{}));
  EXPECT_EQ(g.motion.frames(), 180);
  EXPECT_EQ(g.real_frames(), 180);
  EXPECT_EQ(g.audio->samples.size(), 9u * 16000u);
}

TEST(Ingest, SidecarRoundTripsCaptionsAndTags) {
  const auto dir = testsupport::temp_dir("sidecar");
  auto m = motion_of_length(100, "m1");
  m.local_captions = {"a person walks", "", "a person stops"};
  write_corpus(dir, {m});
  const auto back = load_clip(dir / "m1.motion");
  EXPECT_EQ(back.tag, DatasetTag::motion);
  EXPECT_EQ(back.global_caption, m.global_caption);
  EXPECT_EQ(back.local_captions, m.local_captions);
  EXPECT_EQ(back.label, m.label);
  EXPECT_LT((back.motion.features - m.motion.features).cwiseAbs().maxCoeff(), 1e-5);

  // No sidecar: a wav next to the container marks the clip as gesture.
  std::filesystem::remove(dir / "m1.json");
  EXPECT_EQ(load_clip(dir / "m1.motion").tag, DatasetTag::motion);
  audio::write_wav(dir / "m1.wav", audio::Waveform{16000, std::vector<float>(1600, 0.0f)});
  EXPECT_EQ(load_clip(dir / "m1.motion").tag, DatasetTag::gesture);

  std::ofstream(dir / "m1.json") << "{ not json";
  EXPECT_THROW(load_clip(dir / "m1.motion"), std::runtime_error);
}

TEST(Manifest, RoundTripAndCounts) {
  const auto dir = testsupport::temp_dir("manifest");
  auto g = testsupport::gesture_record(2, "g0");
  g.local_captions = {"waves", "", "nods"};
  auto m = motion_of_length(140, "m0");
  write_corpus(dir, {m, g});
  const auto entries = read_manifest(dir / "manifest.json");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].clip_id, "g0");
  EXPECT_TRUE(entries[0].has_audio);
  EXPECT_EQ(entries[0].caption_count, 2);
  EXPECT_EQ(entries[0].dataset_tag, "gesture");
  EXPECT_EQ(entries[1].clip_id, "m0");
  EXPECT_FALSE(entries[1].has_audio);
  EXPECT_EQ(entries[1].frames, 140);
  EXPECT_EQ(entries[1].caption_count, 1);
}

TEST(DatasetSpecCheck, RejectsInconsistentSettings) {
  DatasetSpec s;
  EXPECT_NO_THROW(s.validate());
  s.split_ratios = {0.8, 0.1, 0.2};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = DatasetSpec{};
  s.min_frames = 200;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = DatasetSpec{};
  s.fps = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  const nlohmann::json j = DatasetSpec{};
  EXPECT_EQ(j.get<DatasetSpec>().target_frames, 180);
}

// ---- split ------------------------------------------------------------------------------

TEST(Split, SizesForHundredAndHundredOne) {
  const auto a = split(ids(100), 1);
  EXPECT_EQ(a.train.size(), 80u);
  EXPECT_EQ(a.val.size(), 10u);
  EXPECT_EQ(a.test.size(), 10u);
  const auto b = split(ids(101), 1);
  EXPECT_EQ(b.train.size(), 81u);
  EXPECT_EQ(b.val.size(), 10u);
  EXPECT_EQ(b.test.size(), 10u);
}

TEST(Split, DeterministicAndSeedSensitive) {
  const auto a = split(ids(50), 7);
  const auto b = split(ids(50), 7);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  auto shuffled = ids(50);
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(split(shuffled, 7).val, a.val);  // input order does not matter
  EXPECT_NE(split(ids(50), 8).train, a.train);
  EXPECT_THROW(split({"x", "x"}, 0), std::invalid_argument);
}

TEST(Split, PartitionLawAcrossSizes) {
  for (int n = 1; n <= 60; ++n) {
    const auto s = split(ids(n), static_cast<std::uint64_t>(n));
    std::multiset<std::string> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
      all.insert(part->begin(), part->end());
    }
    const auto want = ids(n);
    EXPECT_EQ(all, std::multiset<std::string>(want.begin(), want.end())) << n;
    const auto sz = split_sizes(static_cast<std::size_t>(n), {0.8, 0.1, 0.1});
    EXPECT_LE(std::abs(static_cast<double>(sz[0]) - 0.8 * n), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(sz[1]) - 0.1 * n), 1.0);
  }
}

// ---- sampler ------------------------------------------------------------------------------

TEST(Sampler, EqualWeightsGiveEqualFrequencies) {
  std::map<DatasetTag, std::vector<std::size_t>> sets = {{DatasetTag::gesture, {0, 1, 2}},
                                                          {DatasetTag::motion, {3, 4, 5, 6, 7, 8, 9, 10}}};
  WeightedSampler s(sets, {{"gesture", 1.0}, {"motion", 1.0}}, 5);
  int gesture = 0;
  std::map<std::size_t, int> seen;
  for (int i = 0; i < 10000; ++i) {
    const auto [tag, idx] = s.next();
    gesture += tag == DatasetTag::gesture ? 1 : 0;
    if (tag == DatasetTag::gesture) EXPECT_LT(idx, 3u);
    else EXPECT_GE(idx, 3u);
    ++seen[idx];
  }
  EXPECT_GE(gesture / 1e4, 0.48);
  EXPECT_LE(gesture / 1e4, 0.52);
  EXPECT_EQ(seen.size(), 11u);
}

TEST(Sampler, UnequalWeights) {
  WeightedSampler s({{DatasetTag::gesture, {0}}, {DatasetTag::motion, {1}}}, {{"gesture", 3.0}, {"motion", 1.0}}, 6);
  int gesture = 0;
  for (int i = 0; i < 10000; ++i) gesture += s.next().first == DatasetTag::gesture ? 1 : 0;
  EXPECT_NEAR(gesture / 1e4, 0.75, 0.02);
}

TEST(Sampler, InvalidConfigurations) {
  EXPECT_THROW(WeightedSampler({{DatasetTag::gesture, {0}}}, {{"gesture", 0.0}}, 0), std::invalid_argument);
  EXPECT_THROW(WeightedSampler({{DatasetTag::gesture, {0}}}, {{"motion", -1.0}}, 0), std::invalid_argument);
  EXPECT_THROW(WeightedSampler({{DatasetTag::gesture, {}}}, {}, 0), std::invalid_argument);
  WeightedSampler single({{DatasetTag::motion, {4, 5}}, {DatasetTag::gesture, {}}}, {}, 1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(single.next().first, DatasetTag::motion);
}

// ---- synthetic corpus ----------------------------------------------------------------------------

TEST(Synth, DeterministicForSameSeed) {
  const auto a = synth_corpus(9, 4, DatasetTag::motion);
  const auto b = synth_corpus(9, 4, DatasetTag::motion);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].clip_id, b[i].clip_id);
    EXPECT_EQ(a[i].global_caption, b[i].global_caption);
    EXPECT_EQ(a[i].motion.features, b[i].motion.features);
  }
  const auto g1 = synth_corpus(9, 2, DatasetTag::gesture);
  const auto g2 = synth_corpus(9, 2, DatasetTag::gesture);
  EXPECT_EQ(g1[1].audio->samples, g2[1].audio->samples);
  EXPECT_NE(synth_corpus(10, 1, DatasetTag::gesture)[0].audio->samples, g1[0].audio->samples);
  EXPECT_THROW(synth_corpus(1, 0, DatasetTag::motion), std::invalid_argument);
}

TEST(Synth, GroundTruthGestureBeatConsistencyIsHigh) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto r = testsupport::gesture_record(seed);
    const auto bc = metrics::beat_consistency(motion::recover_positions(r.motion), r.motion.fps, *r.audio);
    EXPECT_GT(bc.raw, 0.9) << seed;
  }
}

TEST(Synth, MotionCaptionsFollowTheGrammar) {
  const std::regex grammar(
      "(a person|someone|a man|a woman) (walks forward (quickly|slowly)|takes a few steps backward|turns around to the "
      "(left|right)|raises the (left|right) hand above the head|squats down and stands back up)");
  const auto corpus = synth_corpus(3, 40, DatasetTag::motion);
  std::set<std::string> labels;
  for (const auto& r : corpus) {
    ASSERT_TRUE(r.global_caption);
    EXPECT_TRUE(std::regex_match(*r.global_caption, grammar)) << *r.global_caption;
    EXPECT_GE(r.motion.frames(), 100);
    EXPECT_LE(r.motion.frames(), 180);
    EXPECT_FALSE(r.audio);
    labels.insert(r.label);
  }
  EXPECT_GE(labels.size(), 5u);
}

TEST(Synth, GestureClipsCarryAudioAndNoCaptions) {
  const auto corpus = synth_corpus(4, 3, DatasetTag::gesture);
  for (const auto& r : corpus) {
    ASSERT_TRUE(r.audio);
    EXPECT_EQ(r.audio->sample_rate, 16000);
    EXPECT_DOUBLE_EQ(r.motion.fps, 30.0);
    EXPECT_EQ(r.motion.frames(), 270);
    EXPECT_FALSE(r.global_caption);
    EXPECT_TRUE(r.local_captions.empty());
  }
}
