// Copyright 2026 The FGDM Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fgdm/sbpc/sbpc.h"
#include "support/oracle_model.h"

namespace fgdm {
namespace {

using testing::OracleModel;

constexpr int kCond = 8;
constexpr int kImage = 16;

DenoiserConfig TinyBackbone() {
  DenoiserConfig c;
  c.base_channels = 4;
  c.channel_mult = {1, 2};
  c.attention_scales = {1};
  c.head_channels = 4;
  c.prompt_dim = 6;
  c.max_tokens = 4;
  c.norm_groups = 2;
  c.time_dim = 8;
  return c;
}

WorldConfig World() {
  WorldConfig w;
  w.num_classes = 4;
  return w;
}

GraphSpec Graph() { return MakeSegImageGraph(TinyBackbone(), kCond, kImage, 9); }

// Class `id` painted over rows [y0, y0 + rows) of an otherwise empty map.
LabelMap Band(std::vector<std::pair<int, int>> bands) {
  LabelMap m(kCond, kCond, 0);
  int y = 0;
  for (auto [id, rows] : bands) {
    for (int r = 0; r < rows; ++r, ++y) {
      for (int x = 0; x < kCond; ++x) m.at(y, x) = id;
    }
  }
  return m;
}

Tensor SegLatents(const std::vector<LabelMap>& maps) {
  const Palette palette = WorldPalette(World());
  std::vector<Tensor> items;
  for (const LabelMap& m : maps) items.push_back(LatentFromUnitImage(EncodeMap(m, palette)));
  return StackBatch(items);
}

struct OracleWorld {
  explicit OracleWorld(const std::vector<LabelMap>& maps)
      : spec(Graph()),
        model(NoiseSchedule(spec.schedule),
              {SegLatents(maps),
               testing::PlantedMaps(spec, 1, 3).back()}),
        sbpc(spec, model, WorldPalette(World()), Vocabulary(4)) {}

  GraphSpec spec;
  OracleModel model;
  Sbpc sbpc;
};

// Recalls for "circle square": 0.5, 1, 0, 0.5, 0.5. The last map has only
// three square pixels, below min_pixels.
std::vector<LabelMap> Candidates() {
  LabelMap small = Band({{1, 2}});
  small.at(7, 0) = 2;
  small.at(7, 1) = 2;
  small.at(7, 2) = 2;
  return {Band({{1, 2}}), Band({{1, 2}, {0, 2}, {2, 3}}), Band({{3, 4}}),
          Band({{0, 1}, {2, 1}}), small};
}

SbpcConfig Config(int n, int t_cond = 5, int t_img = 5) {
  SbpcConfig c;
  c.n = n;
  c.t_cond = t_cond;
  c.t_img = t_img;
  return c;
}

TEST_CASE("recall of decoded maps") {
  const LabelMap m = Band({{1, 2}, {2, 1}});
  CHECK(ComputeRecall(m, {1, 2}, 4) == 1.0);
  CHECK(ComputeRecall(m, {3, 4}, 4) == 0.0);
  CHECK(ComputeRecall(m, {1, 3}, 4) == 0.5);
  CHECK(ComputeRecall(m, {2}, 9) == 0.0);  // 8 pixels
  CHECK(ComputeRecall(m, {2}, 8) == 1.0);
  CHECK_THROWS_AS(ComputeRecall(m, {}, 4), std::invalid_argument);
  CHECK_THROWS_AS(ComputeRecall(m, {1}, 0), std::invalid_argument);
}

TEST_CASE("recall monotonicity") {
  RngStream rng(5, "recall");
  for (int trial = 0; trial < 300; ++trial) {
    LabelMap m(kCond, kCond, 0);
    for (int& id : m.ids) id = rng.Uniform() < 0.3 ? static_cast<int>(rng.UniformInt(-1, 5)) : 0;
    std::set<int> targets;
    for (int c = 1; c <= 5; ++c) {
      if (rng.Uniform() < 0.5) targets.insert(c);
    }
    if (targets.empty()) targets.insert(1);
    const int min_pixels = static_cast<int>(rng.UniformInt(1, 5));
    const double r = ComputeRecall(m, targets, min_pixels);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    // An absent extra target never raises recall.
    for (int c = 1; c <= 6; ++c) {
      if (!targets.count(c) && m.Count(c) < min_pixels) {
        std::set<int> more = targets;
        more.insert(c);
        CHECK(ComputeRecall(m, more, min_pixels) <= r);
      }
    }
    // Painting more pixels of a target never lowers it.
    LabelMap painted = m;
    const int c = *targets.begin();
    for (int k = 0; k < 6; ++k) painted.ids[rng.UniformInt(0, painted.ids.size() - 1)] = c;
    for (size_t p = 0; p < m.ids.size(); ++p) {
      if (m.ids[p] == c) painted.ids[p] = c;
    }
    bool others_kept = true;
    for (int t : targets) {
      if (t != c && painted.Count(t) < m.Count(t)) others_kept = false;
    }
    if (others_kept) CHECK(ComputeRecall(painted, targets, min_pixels) >= r);
  }
}

int BruteForceArgmax(const std::vector<double>& v) {
  for (size_t i = 0; i < v.size(); ++i) {
    bool best = true;
    for (size_t j = 0; j < v.size(); ++j) {
      if (v[j] > v[i] || (j < i && v[j] == v[i])) best = false;
    }
    if (best) return static_cast<int>(i);
  }
  return -1;
}

TEST_CASE("select best") {
  CHECK(SelectBest(std::vector<double>{0.5, 1.0, 0.5}) == 1);
  CHECK(SelectBest(std::vector<double>{0.5, 0.5, 0.5}) == 0);
  CHECK(SelectBest(std::vector<double>{0.5, 0.5, 0.5}, TieRule::kHighestIndex) == 2);
  CHECK_THROWS_AS(SelectBest(std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(SelectBest(std::vector<LabelMap>{}, {1}, SbpcConfig{}),
                  std::invalid_argument);
  const std::vector<LabelMap> cands = Candidates();
  CHECK(SelectBest(cands, {1, 2}, SbpcConfig{}) == 1);
}

TEST_CASE("select best matches brute force on random batches") {
  RngStream rng(6, "select");
  for (int batch = 0; batch < 100; ++batch) {
    const int n = static_cast<int>(rng.UniformInt(1, 12));
    const int targets = static_cast<int>(rng.UniformInt(1, 4));
    std::vector<double> recalls;
    for (int i = 0; i < n; ++i) {
      recalls.push_back(static_cast<double>(rng.UniformInt(0, targets)) / targets);
    }
    const int best = SelectBest(recalls);
    CHECK(best == BruteForceArgmax(recalls));
    std::vector<double> rescaled;
    for (double r : recalls) rescaled.push_back(std::exp(3.0 * r) - 7.0 + r * r);
    CHECK(SelectBest(rescaled) == best);
  }
}

TEST_CASE("report statistics") {
  RecallReport r;
  r.recalls = {0.5, 1.0, 0.0, 0.75, 0.5, 1.0};
  Summarize(r);
  CHECK(r.avg == doctest::Approx(3.75 / 6));
  CHECK(r.min == 0.0);
  CHECK(r.max == 1.0);
  CHECK(r.median == 0.625);
  CHECK(r.at_least[0] == 5);
  CHECK(r.at_least[1] == 3);
  CHECK(r.at_least[2] == 2);
  r.recalls = {0.2, 0.9, 0.4};
  Summarize(r);
  CHECK(r.median == 0.4);
  r.recalls.clear();
  CHECK_THROWS(Summarize(r));
}

TEST_CASE("config json is strict") {
  SbpcConfig c = Config(3, 4, 6);
  c.tie = TieRule::kHighestIndex;
  CHECK(SbpcConfig::FromJson(c.ToJson()).ToJson() == c.ToJson());
  nlohmann::json j = c.ToJson();
  j["N"] = 3;
  CHECK_THROWS_AS(SbpcConfig::FromJson(j), std::invalid_argument);
  CHECK_THROWS(Config(0).Validate());
  c = Config(2);
  c.min_pixels = 0;
  CHECK_THROWS(c.Validate());
  CHECK_THROWS(ParseTieRule("random"));
}

TEST_CASE("oracle run selects and renders the winner once") {
  OracleWorld w(Candidates());
  const SbpcResult r = w.sbpc.Run("circle square", Config(5), 40);
  CHECK(r.report.recalls == std::vector<double>{0.5, 1.0, 0.0, 0.5, 0.5});
  CHECK(r.report.selected == 1);
  CHECK(r.report.seeds == std::vector<uint64_t>{40, 41, 42, 43, 44});
  CHECK(r.report.targets == std::vector<int>{1, 2});
  CHECK(r.candidates[1] == Candidates()[1]);
  CHECK(r.sample.seeds == std::vector<uint64_t>{41});
  CHECK(w.sbpc.DecodeSegmentation(r.sample, 0) == Candidates()[1]);
  CHECK(r.sample.latents.at("image").shape() == Shape{1, 3, kImage, kImage});
  int image_calls = 0;
  for (const auto& call : w.model.calls()) {
    if (call.factor != 1) continue;
    ++image_calls;
    CHECK(call.parents.at(0).dim(0) == 1);
  }
  CHECK(image_calls == 5);
  CHECK(r.report.seconds.condition > 0.0);
  CHECK(r.report.seconds.image > 0.0);
}

TEST_CASE("report max is a prefix maximum over seeds") {
  OracleWorld w(Candidates());
  double last = -1.0;
  const SbpcResult full = w.sbpc.Run("circle square", Config(5), 0);
  for (int n = 1; n <= 5; ++n) {
    const SbpcResult r = w.sbpc.Run("circle square", Config(n), 0);
    CHECK(r.report.max >= last);
    last = r.report.max;
    CHECK(std::equal(r.report.recalls.begin(), r.report.recalls.end(),
                     full.report.recalls.begin()));
  }
}

TEST_CASE("trained-style model: prefix property and single-seed equivalence") {
  const GraphSpec spec = Graph();
  FgdmModel model(spec, 11);
  // Make the seg adapter active so the image depends on its parent.
  for (Parameter* p : model.adapter(1)->params().List()) {
    auto d = p->value.mutable_data();
    for (size_t i = 0; i < d.size(); ++i) d[i] += 0.01f * static_cast<Real>((i % 7) - 3);
  }
  const Sbpc sbpc(spec, model, WorldPalette(World()), Vocabulary(4));
  SbpcConfig c = Config(4, 6, 6);
  c.guidance_scale = 2.0;
  const SbpcResult four = sbpc.Run("square triangle", c, 90);
  c.n = 2;
  const SbpcResult two = sbpc.Run("square triangle", c, 90);
  CHECK(two.report.recalls[0] == four.report.recalls[0]);
  CHECK(two.report.recalls[1] == four.report.recalls[1]);
  CHECK(four.report.max >= two.report.max);

  c.n = 1;
  const SbpcResult one = sbpc.Run("square triangle", c, 90);
  SampleOptions o;
  o.sampler.steps = 6;
  o.sampler.guidance_scale = 2.0;
  const Vocabulary vocab(4);
  const std::vector<SampleRequest> req = {{vocab.Encode("square triangle"), 90}};
  const JointSample joint = SampleJoint(spec, model, req, o);
  CHECK(one.sample.latents.at("image").BitwiseEqual(joint.latents.at("image")));
  CHECK(one.sample.latents.at("seg").BitwiseEqual(joint.latents.at("seg")));
  CHECK(one.report.recalls[0] ==
        ComputeRecall(sbpc.DecodeSegmentation(joint, 0), {2, 3}, c.min_pixels));

  // Reports of identical runs are identical.
  CHECK(sbpc.Run("square triangle", Config(3, 4, 4), 5).report.ToJson().dump() ==
        sbpc.Run("square triangle", Config(3, 4, 4), 5).report.ToJson().dump());
}

TEST_CASE("report json fields") {
  OracleWorld w(Candidates());
  const RecallReport r = w.sbpc.Run("circle square", Config(3), 1).report;
  const nlohmann::json j = r.ToJson();
  for (const char* key : {"prompt", "targets", "n", "t_cond", "t_img", "seeds", "recalls",
                          "selected", "selected_recall", "avg", "min", "max", "median",
                          "count_at_least"}) {
    CHECK(j.contains(key));
  }
  CHECK_FALSE(j.contains("seconds"));
  CHECK(r.ToJson(true).at("seconds").contains("scoring"));
  const auto& counts = j.at("count_at_least");
  CHECK(counts.at("0.5") >= counts.at("0.75"));
  CHECK(counts.at("0.75") >= counts.at("0.9"));
}

TEST_CASE("recall trials") {
  OracleWorld all({Band({{1, 2}, {2, 2}, {3, 2}, {4, 2}})});
  for (uint64_t seed = 0; seed < 4; ++seed) {
    CHECK(all.sbpc.RecallTrials("circle square diamond", 1.0, 5, Config(1), seed).trials ==
          1);
  }
  CHECK(all.sbpc.RecallTrials("circle", 1e-9, 5, Config(1), 0).trials == 1);
  CHECK_THROWS_AS(all.sbpc.RecallTrials("circle", 0.0, 5, Config(1), 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(all.sbpc.RecallTrials("circle", 1.5, 5, Config(1), 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(all.sbpc.RecallTrials("two", 0.5, 5, Config(1), 0),
                  std::invalid_argument);

  OracleWorld none({Band({{0, 8}})});
  const TrialsResult miss = none.sbpc.RecallTrials("circle", 0.7, 3, Config(1), 0);
  CHECK_FALSE(miss.trials.has_value());
  CHECK(miss.Label(3) == "3+");

  const std::vector<TrialsResult> results = {{1}, {1}, {3}, {}, {2}};
  const nlohmann::json h = TrialsHistogram(results, 3);
  REQUIRE(h.size() == 4);
  CHECK(h[0].at("bucket") == "1");
  CHECK(h[0].at("count") == 2);
  CHECK(h[2].at("count") == 1);
  CHECK(h[3].at("bucket") == "3+");
  CHECK(h[3].at("count") == 1);
  const std::vector<TrialsResult> bad = {{4}};
  CHECK_THROWS(TrialsHistogram(bad, 3));
}

TEST_CASE("graph and prompt preconditions") {
  GraphSpec depth_only = Graph();
  depth_only.factors[0].kind = VariableKind::kDepth;
  FgdmModel model(Graph(), 1);
  CHECK_THROWS_AS(Sbpc(depth_only, model, WorldPalette(World()), Vocabulary(4)),
                  std::invalid_argument);
  OracleWorld w(Candidates());
  CHECK_THROWS_AS(w.sbpc.Run("two three", Config(2), 0), std::invalid_argument);
}

TEST_CASE("full image baseline and timing harness") {
  OracleWorld w(Candidates());
  const SbpcResult full = w.sbpc.RunFullImages("circle square", Config(5), 40);
  CHECK(full.report.selected == 1);
  CHECK(full.sample.seeds == std::vector<uint64_t>{41});
  CHECK(full.sample.latents.at("image").dim(0) == 1);

  const std::vector<TimingCase> cases = {{"sbpc", Config(5), false},
                                         {"sbpc_again", Config(5), false},
                                         {"full", Config(5), true}};
  const std::vector<std::string> prompts = {"circle square", "square"};
  const std::vector<TimingRow> rows = RunTimingHarness(w.sbpc, cases, prompts, 40);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].mean_selected_recall == rows[1].mean_selected_recall);
  CHECK(rows[0].mean_selected_recall == rows[2].mean_selected_recall);
  CHECK(rows[2].full_images);
  CHECK(rows[2].mean_condition_seconds == 0.0);
  const std::string csv = TimingCsv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(TimingJson(rows).size() == 3);
}

TEST_CASE("aggregate over prompts") {
  OracleWorld w(Candidates());
  std::vector<RecallReport> reports = {w.sbpc.Run("circle square", Config(5), 0).report,
                                       w.sbpc.Run("diamond", Config(5), 0).report};
  const nlohmann::json a = AggregateReports(reports);
  CHECK(a.at("prompts") == 2);
  CHECK(a.at("mean_selected_recall").get<double>() == doctest::Approx(0.5));
  CHECK(a.at("mean_max_recall").get<double>() == doctest::Approx(0.5));
  CHECK_THROWS(AggregateReports(std::vector<RecallReport>{}));
}

MatrixD Gaussian(RngStream& rng, int64_t n, const std::vector<double>& mu,
                 const std::vector<double>& sigma) {
  MatrixD m(n, static_cast<Eigen::Index>(mu.size()));
  for (int64_t i = 0; i < n; ++i) {
    for (size_t k = 0; k < mu.size(); ++k) m(i, k) = mu[k] + sigma[k] * rng.Normal();
  }
  return m;
}

TEST_CASE("frechet distance") {
  RngStream rng(7, "frechet");
  const MatrixD a = Gaussian(rng, 500, {0.1, 0.2, -0.3, 0.0}, {1.0, 0.5, 2.0, 0.1});
  CHECK(std::abs(FrechetDistance(a, a)) < 1e-6);

  const MatrixD g0 = Gaussian(rng, 100000, {0.0}, {1.0});
  const MatrixD g1 = Gaussian(rng, 100000, {1.0}, {1.0});
  CHECK(std::abs(FrechetDistance(g0, g1) - 1.0) < 0.05);

  // Independent coordinates: sum of 1-D closed forms.
  const MatrixD x = Gaussian(rng, 100000, {0.0, 1.0, -1.0}, {1.0, 2.0, 0.5});
  const MatrixD y = Gaussian(rng, 100000, {0.5, 1.0, 0.0}, {1.5, 1.0, 0.5});
  const double expected = 0.25 + 1.0 + 0.25 + 1.0;
  CHECK(std::abs(FrechetDistance(x, y) - expected) < 0.05);

  for (int trial = 0; trial < 50; ++trial) {
    const int d = static_cast<int>(rng.UniformInt(1, 6));
    const int n = static_cast<int>(rng.UniformInt(2, 12));
    const int m = static_cast<int>(rng.UniformInt(2, 12));
    MatrixD p(n, d), q(m, d);
    for (int i = 0; i < n * d; ++i) p.data()[i] = rng.Normal() * 3.0;
    for (int i = 0; i < m * d; ++i) q.data()[i] = rng.Normal() + 1.0;
    const double pq = FrechetDistance(p, q);
    CHECK(pq >= 0.0);
    CHECK(pq == FrechetDistance(q, p));
  }

  CHECK_THROWS(FrechetDistance(MatrixD::Zero(1, 2), a.leftCols(2)));
  CHECK_THROWS(FrechetDistance(a, a.leftCols(2)));
  MatrixD bad = a;
  bad(3, 1) = std::nan("");
  CHECK_THROWS(FrechetDistance(bad, a));
}

TEST_CASE("pooled features") {
  Tensor img({8, 12, 3}, 0.25f);
  std::vector<double> f = PooledFeatures(img);
  REQUIRE(f.size() == 48);
  for (double v : f) CHECK(v == doctest::Approx(0.25));
  auto d = img.mutable_data();
  // Bottom-right cell, channel 2.
  for (int y = 6; y < 8; ++y) {
    for (int x = 9; x < 12; ++x) d[(y * 12 + x) * 3 + 2] = 1.0f;
  }
  f = PooledFeatures(img);
  CHECK(f[15 * 3 + 2] == doctest::Approx(1.0));
  CHECK(f[15 * 3 + 1] == doctest::Approx(0.25));
  CHECK(f[14 * 3 + 2] == doctest::Approx(0.25));
  CHECK_THROWS(PooledFeatures(Tensor({6, 8, 3})));
  CHECK_THROWS(PooledFeatures(Tensor({8, 8})));
}

}  // namespace
}  // namespace fgdm
