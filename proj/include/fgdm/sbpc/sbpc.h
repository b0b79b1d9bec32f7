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

#ifndef FGDM_SBPC_SBPC_H_
#define FGDM_SBPC_SBPC_H_

#include <array>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgdm/codec/codec.h"
#include "fgdm/graph/sampler.h"
#include "fgdm/numerics/linalg.h"
#include "fgdm/toyworld/toyworld.h"

namespace fgdm {

enum class TieRule { kLowestIndex, kHighestIndex };

std::string ToString(TieRule rule);
TieRule ParseTieRule(const std::string& name);

struct SbpcConfig {
  int n = 10;
  int t_cond = 10;
  int t_img = 20;
  int min_pixels = 4;
  TieRule tie = TieRule::kLowestIndex;
  double guidance_scale = 1.0;
  double eta = 0.0;
  bool clip_x0 = true;

  void Validate() const;
  nlohmann::json ToJson() const;
  static SbpcConfig FromJson(const nlohmann::json& j);
};

inline constexpr std::array<double, 3> kRecallThresholds = {0.5, 0.75, 0.9};

struct PhaseSeconds {
  double condition = 0.0;
  double scoring = 0.0;
  double image = 0.0;

  double total() const { return condition + scoring + image; }
};

struct RecallReport {
  std::string prompt;
  std::vector<int> targets;
  int t_cond = 0;
  int t_img = 0;
  std::vector<uint64_t> seeds;
  std::vector<double> recalls;
  int selected = 0;
  double avg = 0.0;
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  std::array<int, kRecallThresholds.size()> at_least{};
  PhaseSeconds seconds;

  int n() const { return static_cast<int>(recalls.size()); }
  double selected_recall() const { return recalls.at(selected); }
  // Wall-clock fields are left out unless asked for, so that reports of
  // identical runs compare byte for byte.
  nlohmann::json ToJson(bool with_timing = false) const;
};

// Fills the statistics of `report` from report.recalls.
void Summarize(RecallReport& report);

// Fraction of targets with at least min_pixels pixels. Throws
// std::invalid_argument on an empty target set or min_pixels < 1.
double ComputeRecall(const LabelMap& seg, const std::set<int>& targets,
                     int min_pixels);

// Index of the best recall under the tie rule. Throws on an empty list.
int SelectBest(std::span<const double> recalls,
               TieRule tie = TieRule::kLowestIndex);
int SelectBest(std::span<const LabelMap> candidates,
               const std::set<int>& targets, const SbpcConfig& config);

struct SbpcResult {
  JointSample sample;  // batch of one: the winning conditions and the image
  RecallReport report;
  std::vector<LabelMap> candidates;
};

struct TrialsResult {
  std::optional<int> trials;  // empty when max_trials did not reach R
  std::string Label(int max_trials) const;
};

// Mean-over-prompts view of several reports.
nlohmann::json AggregateReports(std::span<const RecallReport> reports);

// Counts per bucket "1".."max" plus "max+".
nlohmann::json TrialsHistogram(std::span<const TrialsResult> results,
                               int max_trials);

// Sampling-based prompt compliance over a trained graph whose first
// segmentation variable is scored. Condition factors are all factors except
// the image factor.
class Sbpc {
 public:
  Sbpc(const GraphSpec& spec, const EpsModel& model, Palette palette,
       Vocabulary vocab);

  const std::string& segmentation_variable() const { return seg_variable_; }

  // Condition factors only, seeds base..base+n-1, with trajectories.
  JointSample SampleConditions(const std::string& prompt,
                               const SbpcConfig& config, uint64_t base_seed,
                               int n) const;
  LabelMap DecodeSegmentation(const JointSample& sample, int64_t b) const;

  // Samples N condition sets, scores them and runs the image factor once
  // on the winner's condition trajectories.
  SbpcResult Run(const std::string& prompt, const SbpcConfig& config,
                 uint64_t base_seed) const;

  // Full joint sampling of n images at t_img steps, then the same
  // selection. The baseline that SBPC is timed against.
  SbpcResult RunFullImages(const std::string& prompt, const SbpcConfig& config,
                           uint64_t base_seed) const;

  // One seed at a time until recall >= target. Throws unless
  // 0 < target <= 1 and max_trials >= 1.
  TrialsResult RecallTrials(const std::string& prompt, double target,
                            int max_trials, const SbpcConfig& config,
                            uint64_t base_seed) const;

 private:
  SampleOptions ConditionOptions(const SbpcConfig& config) const;
  void Score(const JointSample& sample, const std::set<int>& targets,
             const SbpcConfig& config, SbpcResult& result) const;

  const GraphSpec& spec_;
  const EpsModel& model_;
  Palette palette_;
  Vocabulary vocab_;
  std::string seg_variable_;
  std::set<std::string> conditions_;
};

// Toy stand-in for Inception features: 4x4 average-pooled RGB, d = 48.
// Input [H, W, 3] with H and W divisible by 4.
inline constexpr int kPoolGrid = 4;
std::vector<double> PooledFeatures(const Tensor& hwc);

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)) with 1/(n-1)
// covariances. Rows are samples. Throws with fewer than two rows, a
// dimension mismatch or non-finite input.
double FrechetDistance(const MatrixD& a, const MatrixD& b);

struct TimingCase {
  std::string name;
  SbpcConfig config;
  bool full_images = false;
};

struct TimingRow {
  std::string name;
  bool full_images = false;
  int n = 0;
  int t_cond = 0;
  int t_img = 0;
  double mean_seconds = 0.0;
  double mean_condition_seconds = 0.0;
  double mean_image_seconds = 0.0;
  double mean_selected_recall = 0.0;
};

std::vector<TimingRow> RunTimingHarness(const Sbpc& sbpc,
                                        std::span<const TimingCase> cases,
                                        std::span<const std::string> prompts,
                                        uint64_t base_seed);
std::string TimingCsv(std::span<const TimingRow> rows);
nlohmann::json TimingJson(std::span<const TimingRow> rows);

}  // namespace fgdm

#endif  // FGDM_SBPC_SBPC_H_
