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

#include "fgdm/sbpc/sbpc.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "fgdm/numerics/json_keys.h"

namespace fgdm {
namespace {

using Clock = std::chrono::steady_clock;

double Since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<SampleRequest> Requests(const std::vector<int>& prompt,
                                    uint64_t base_seed, int n) {
  std::vector<SampleRequest> out;
  for (int i = 0; i < n; ++i) out.push_back({prompt, base_seed + i});
  return out;
}

SamplerConfig MakeSampler(const SbpcConfig& c, int steps) {
  SamplerConfig s;
  s.steps = steps;
  s.eta = c.eta;
  s.guidance_scale = c.guidance_scale;
  s.clip_x0 = c.clip_x0;
  return s;
}

JointSample SliceSample(const JointSample& s, int64_t b) {
  JointSample out;
  out.seeds = {s.seeds.at(b)};
  for (const auto& [v, t] : s.latents) out.latents[v] = SliceBatch(t, b);
  for (const auto& [v, steps] : s.trajectories) {
    for (const Tensor& t : steps) out.trajectories[v].push_back(SliceBatch(t, b));
  }
  out.seconds = s.seconds;
  return out;
}

}  // namespace

std::string ToString(TieRule rule) {
  return rule == TieRule::kLowestIndex ? "lowest_index" : "highest_index";
}

TieRule ParseTieRule(const std::string& name) {
  if (name == "lowest_index") return TieRule::kLowestIndex;
  if (name == "highest_index") return TieRule::kHighestIndex;
  throw std::invalid_argument("unknown tie rule '" + name + "'");
}

void SbpcConfig::Validate() const {
  if (n < 1) throw std::invalid_argument("SBPC needs n >= 1");
  if (t_cond < 1 || t_img < 1) throw std::invalid_argument("SBPC step counts must be positive");
  if (min_pixels < 1) throw std::invalid_argument("min_pixels must be >= 1");
  if (!(guidance_scale >= 0.0)) throw std::invalid_argument("guidance scale must be >= 0");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must be in [0, 1]");
}

nlohmann::json SbpcConfig::ToJson() const {
  return {{"n", n},
          {"t_cond", t_cond},
          {"t_img", t_img},
          {"min_pixels", min_pixels},
          {"tie", ToString(tie)},
          {"guidance_scale", guidance_scale},
          {"eta", eta},
          {"clip_x0", clip_x0}};
}

SbpcConfig SbpcConfig::FromJson(const nlohmann::json& j) {
  RequireKnownKeys(j, {"n", "t_cond", "t_img", "min_pixels", "tie",
                       "guidance_scale", "eta", "clip_x0"},
                   "sbpc config");
  SbpcConfig c;
  c.n = j.value("n", c.n);
  c.t_cond = j.value("t_cond", c.t_cond);
  c.t_img = j.value("t_img", c.t_img);
  c.min_pixels = j.value("min_pixels", c.min_pixels);
  if (j.contains("tie")) c.tie = ParseTieRule(j.at("tie").get<std::string>());
  c.guidance_scale = j.value("guidance_scale", c.guidance_scale);
  c.eta = j.value("eta", c.eta);
  c.clip_x0 = j.value("clip_x0", c.clip_x0);
  c.Validate();
  return c;
}

nlohmann::json RecallReport::ToJson(bool with_timing) const {
  nlohmann::json counts = nlohmann::json::object();
  for (size_t i = 0; i < kRecallThresholds.size(); ++i) {
    std::ostringstream key;
    key << kRecallThresholds[i];
    counts[key.str()] = at_least[i];
  }
  nlohmann::json j = {{"prompt", prompt},
                      {"targets", targets},
                      {"n", n()},
                      {"t_cond", t_cond},
                      {"t_img", t_img},
                      {"seeds", seeds},
                      {"recalls", recalls},
                      {"selected", selected},
                      {"selected_recall", recalls.empty() ? 0.0 : selected_recall()},
                      {"avg", avg},
                      {"min", min},
                      {"max", max},
                      {"median", median},
                      {"count_at_least", counts}};
  if (with_timing) {
    j["seconds"] = {{"condition", seconds.condition},
                    {"scoring", seconds.scoring},
                    {"image", seconds.image}};
  }
  return j;
}

void Summarize(RecallReport& r) {
  if (r.recalls.empty()) throw std::invalid_argument("report has no recalls");
  std::vector<double> sorted = r.recalls;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  double sum = 0.0;
  for (double v : sorted) sum += v;
  r.avg = sum / n;
  r.min = sorted.front();
  r.max = sorted.back();
  r.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  for (size_t i = 0; i < kRecallThresholds.size(); ++i) {
    r.at_least[i] = static_cast<int>(std::count_if(
        sorted.begin(), sorted.end(),
        [&](double v) { return v >= kRecallThresholds[i]; }));
  }
}

double ComputeRecall(const LabelMap& seg, const std::set<int>& targets,
                     int min_pixels) {
  if (targets.empty()) throw std::invalid_argument("recall needs at least one target class");
  if (min_pixels < 1) throw std::invalid_argument("min_pixels must be >= 1");
  int present = 0;
  for (int c : targets) {
    if (seg.Count(c) >= min_pixels) ++present;
  }
  return static_cast<double>(present) / static_cast<double>(targets.size());
}

int SelectBest(std::span<const double> recalls, TieRule tie) {
  if (recalls.empty()) throw std::invalid_argument("no candidates to select from");
  int best = 0;
  for (int i = 1; i < static_cast<int>(recalls.size()); ++i) {
    const bool better = tie == TieRule::kLowestIndex ? recalls[i] > recalls[best]
                                                     : recalls[i] >= recalls[best];
    if (better) best = i;
  }
  return best;
}

int SelectBest(std::span<const LabelMap> candidates,
               const std::set<int>& targets, const SbpcConfig& config) {
  if (candidates.empty()) throw std::invalid_argument("no candidates to select from");
  std::vector<double> recalls;
  for (const LabelMap& m : candidates) {
    recalls.push_back(ComputeRecall(m, targets, config.min_pixels));
  }
  return SelectBest(recalls, config.tie);
}

std::string TrialsResult::Label(int max_trials) const {
  return trials ? std::to_string(*trials) : std::to_string(max_trials) + "+";
}

nlohmann::json AggregateReports(std::span<const RecallReport> reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to aggregate");
  double avg = 0, mn = 0, mx = 0, med = 0, sel = 0;
  std::array<double, kRecallThresholds.size()> counts{};
  for (const RecallReport& r : reports) {
    avg += r.avg;
    mn += r.min;
    mx += r.max;
    med += r.median;
    sel += r.selected_recall();
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += r.at_least[i];
  }
  const double k = static_cast<double>(reports.size());
  nlohmann::json c = nlohmann::json::object();
  for (size_t i = 0; i < counts.size(); ++i) {
    std::ostringstream key;
    key << kRecallThresholds[i];
    c[key.str()] = counts[i] / k;
  }
  return {{"prompts", reports.size()},
          {"n", reports.front().n()},
          {"t_cond", reports.front().t_cond},
          {"t_img", reports.front().t_img},
          {"mean_avg_recall", avg / k},
          {"mean_min_recall", mn / k},
          {"mean_max_recall", mx / k},
          {"mean_median_recall", med / k},
          {"mean_selected_recall", sel / k},
          {"mean_count_at_least", c}};
}

nlohmann::json TrialsHistogram(std::span<const TrialsResult> results,
                               int max_trials) {
  if (max_trials < 1) throw std::invalid_argument("max_trials must be >= 1");
  nlohmann::json buckets = nlohmann::json::array();
  std::vector<int> counts(max_trials + 1, 0);
  for (const TrialsResult& r : results) {
    if (r.trials && (*r.trials < 1 || *r.trials > max_trials)) {
      throw std::invalid_argument("trial count outside 1..max_trials");
    }
    ++counts[r.trials ? *r.trials - 1 : max_trials];
  }
  for (int i = 0; i <= max_trials; ++i) {
    buckets.push_back({{"bucket", i < max_trials ? std::to_string(i + 1)
                                                 : std::to_string(max_trials) + "+"},
                       {"count", counts[i]}});
  }
  return buckets;
}

Sbpc::Sbpc(const GraphSpec& spec, const EpsModel& model, Palette palette,
           Vocabulary vocab)
    : spec_(spec), model_(model), palette_(std::move(palette)), vocab_(std::move(vocab)) {
  spec_.Validate();
  for (int i = 0; i < spec_.num_factors(); ++i) {
    const FactorSpec& f = spec_.factors[i];
    if (i == spec_.image_index()) continue;
    conditions_.insert(f.output);
    if (seg_variable_.empty() && f.kind == VariableKind::kSegmentation) {
      seg_variable_ = f.output;
    }
  }
  if (seg_variable_.empty()) {
    throw std::invalid_argument("SBPC needs a segmentation factor in the graph");
  }
}

SampleOptions Sbpc::ConditionOptions(const SbpcConfig& config) const {
  SampleOptions o;
  o.mode = InferenceMode::kJoint;
  o.sampler = MakeSampler(config, config.t_cond);
  o.keep_trajectories = true;
  return o;
}

JointSample Sbpc::SampleConditions(const std::string& prompt,
                                   const SbpcConfig& config, uint64_t base_seed,
                                   int n) const {
  config.Validate();
  const auto requests = Requests(vocab_.Encode(prompt), base_seed, n);
  return SampleSubset(spec_, model_, conditions_, requests, ConditionOptions(config),
                      conditions_);
}

LabelMap Sbpc::DecodeSegmentation(const JointSample& sample, int64_t b) const {
  return DecodeMap(UnitImageFromLatent(sample.Latent(seg_variable_, b)), palette_,
                   palette_.margin());
}

void Sbpc::Score(const JointSample& sample, const std::set<int>& targets,
                 const SbpcConfig& config, SbpcResult& result) const {
  const int n = static_cast<int>(sample.seeds.size());
  for (int b = 0; b < n; ++b) {
    result.candidates.push_back(DecodeSegmentation(sample, b));
    result.report.recalls.push_back(
        ComputeRecall(result.candidates.back(), targets, config.min_pixels));
  }
  result.report.selected = SelectBest(result.report.recalls, config.tie);
  Summarize(result.report);
}

namespace {

RecallReport StartReport(const std::string& prompt, const std::set<int>& targets,
                         const SbpcConfig& config, uint64_t base_seed) {
  if (targets.empty()) {
    throw std::invalid_argument("prompt '" + prompt + "' names no object class");
  }
  RecallReport r;
  r.prompt = prompt;
  r.targets.assign(targets.begin(), targets.end());
  r.t_cond = config.t_cond;
  r.t_img = config.t_img;
  for (int i = 0; i < config.n; ++i) r.seeds.push_back(base_seed + i);
  return r;
}

}  // namespace

SbpcResult Sbpc::Run(const std::string& prompt, const SbpcConfig& config,
                     uint64_t base_seed) const {
  config.Validate();
  const std::set<int> targets = ExtractObjectClasses(prompt, vocab_);
  SbpcResult result;
  result.report = StartReport(prompt, targets, config, base_seed);

  auto start = Clock::now();
  const JointSample conds = SampleConditions(prompt, config, base_seed, config.n);
  result.report.seconds.condition = Since(start);

  start = Clock::now();
  Score(conds, targets, config, result);
  result.report.seconds.scoring = Since(start);

  start = Clock::now();
  const int sel = result.report.selected;
  SampleOptions o;
  o.mode = InferenceMode::kJoint;
  o.sampler = MakeSampler(config, config.t_img);
  for (const std::string& v : conditions_) {
    std::vector<Tensor> steps;
    for (const Tensor& t : conds.trajectories.at(v)) steps.push_back(SliceBatch(t, sel));
    o.sources[v] = VariableSource::Trajectory(std::move(steps));
  }
  const std::vector<SampleRequest> one = {{vocab_.Encode(prompt), base_seed + sel}};
  result.sample = RunGraph(spec_, model_, one, o);
  result.report.seconds.image = Since(start);
  for (const auto& [v, s] : conds.seconds) {
    if (conditions_.count(v)) result.sample.seconds[v] = s;
  }
  return result;
}

SbpcResult Sbpc::RunFullImages(const std::string& prompt, const SbpcConfig& config,
                               uint64_t base_seed) const {
  config.Validate();
  const std::set<int> targets = ExtractObjectClasses(prompt, vocab_);
  SbpcResult result;
  result.report = StartReport(prompt, targets, config, base_seed);
  result.report.t_cond = config.t_img;

  auto start = Clock::now();
  SampleOptions o;
  o.mode = InferenceMode::kJoint;
  o.sampler = MakeSampler(config, config.t_img);
  const auto requests = Requests(vocab_.Encode(prompt), base_seed, config.n);
  const JointSample all = RunGraph(spec_, model_, requests, o);
  result.report.seconds.image = Since(start);

  start = Clock::now();
  Score(all, targets, config, result);
  result.report.seconds.scoring = Since(start);
  result.sample = SliceSample(all, result.report.selected);
  return result;
}

TrialsResult Sbpc::RecallTrials(const std::string& prompt, double target,
                                int max_trials, const SbpcConfig& config,
                                uint64_t base_seed) const {
  if (!(target > 0.0 && target <= 1.0)) {
    throw std::invalid_argument("target recall must be in (0, 1]");
  }
  if (max_trials < 1) throw std::invalid_argument("max_trials must be >= 1");
  const std::set<int> targets = ExtractObjectClasses(prompt, vocab_);
  if (targets.empty()) {
    throw std::invalid_argument("prompt '" + prompt + "' names no object class");
  }
  for (int i = 0; i < max_trials; ++i) {
    const JointSample s = SampleConditions(prompt, config, base_seed + i, 1);
    if (ComputeRecall(DecodeSegmentation(s, 0), targets, config.min_pixels) >= target) {
      return {i + 1};
    }
  }
  return {};
}

std::vector<double> PooledFeatures(const Tensor& hwc) {
  if (hwc.rank() != 3 || hwc.dim(2) != 3) {
    throw std::invalid_argument("PooledFeatures expects [H,W,3], got " +
                                ShapeString(hwc.shape()));
  }
  const int64_t h = hwc.dim(0), w = hwc.dim(1);
  if (h % kPoolGrid || w % kPoolGrid) {
    throw std::invalid_argument("image size must be divisible by 4");
  }
  const int64_t ch = h / kPoolGrid, cw = w / kPoolGrid;
  std::vector<double> out(kPoolGrid * kPoolGrid * 3, 0.0);
  auto x = hwc.data();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t xx = 0; xx < w; ++xx) {
      const int64_t cell = (y / ch) * kPoolGrid + xx / cw;
      for (int c = 0; c < 3; ++c) out[cell * 3 + c] += x[(y * w + xx) * 3 + c];
    }
  }
  for (double& v : out) v /= static_cast<double>(ch * cw);
  return out;
}

namespace {

void Moments(const MatrixD& x, VectorD& mu, MatrixD& cov) {
  mu = x.colwise().mean().transpose();
  const MatrixD centered = x.rowwise() - mu.transpose();
  cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  cov = 0.5 * (cov + cov.transpose());
}

// Tr((S_a S_b)^(1/2)) through the symmetric form S_a^(1/2) S_b S_a^(1/2).
double TraceSqrtProduct(const MatrixD& sa, const MatrixD& sb) {
  const MatrixD ra = PsdSqrt(sa);
  MatrixD m = ra * sb * ra;
  m = 0.5 * (m + m.transpose());
  return PsdSqrt(m).trace();
}

}  // namespace

double FrechetDistance(const MatrixD& a, const MatrixD& b) {
  if (a.rows() < 2 || b.rows() < 2) {
    throw std::invalid_argument("Frechet distance needs at least two samples per set");
  }
  if (a.cols() != b.cols()) throw std::invalid_argument("feature dimensions differ");
  if (!a.allFinite() || !b.allFinite()) throw std::invalid_argument("features must be finite");
  VectorD mu_a, mu_b;
  MatrixD s_a, s_b;
  Moments(a, mu_a, s_a);
  Moments(b, mu_b, s_b);
  const double mean_term = (mu_a - mu_b).squaredNorm();
  // Both orders are averaged so that swapping the arguments gives the same
  // bits.
  const double cross = 0.5 * (TraceSqrtProduct(s_a, s_b) + TraceSqrtProduct(s_b, s_a));
  const double d = mean_term + (s_a.trace() + s_b.trace()) - 2.0 * cross;
  return std::max(d, 0.0);
}

std::vector<TimingRow> RunTimingHarness(const Sbpc& sbpc,
                                        std::span<const TimingCase> cases,
                                        std::span<const std::string> prompts,
                                        uint64_t base_seed) {
  if (prompts.empty()) throw std::invalid_argument("timing harness needs prompts");
  std::vector<TimingRow> rows;
  for (const TimingCase& c : cases) {
    TimingRow row;
    row.name = c.name;
    row.full_images = c.full_images;
    row.n = c.config.n;
    row.t_cond = c.full_images ? c.config.t_img : c.config.t_cond;
    row.t_img = c.config.t_img;
    for (size_t p = 0; p < prompts.size(); ++p) {
      const uint64_t seed = base_seed + 1000 * p;
      const SbpcResult r = c.full_images ? sbpc.RunFullImages(prompts[p], c.config, seed)
                                         : sbpc.Run(prompts[p], c.config, seed);
      row.mean_seconds += r.report.seconds.total();
      row.mean_condition_seconds += r.report.seconds.condition;
      row.mean_image_seconds += r.report.seconds.image;
      row.mean_selected_recall += r.report.selected_recall();
    }
    const double k = static_cast<double>(prompts.size());
    row.mean_seconds /= k;
    row.mean_condition_seconds /= k;
    row.mean_image_seconds /= k;
    row.mean_selected_recall /= k;
    rows.push_back(row);
  }
  return rows;
}

std::string TimingCsv(std::span<const TimingRow> rows) {
  std::ostringstream os;
  os << "name,mode,n,t_cond,t_img,mean_seconds,mean_condition_seconds,"
        "mean_image_seconds,mean_selected_recall\n";
  os << std::setprecision(6);
  for (const TimingRow& r : rows) {
    os << r.name << ',' << (r.full_images ? "full_images" : "sbpc") << ',' << r.n << ','
       << r.t_cond << ',' << r.t_img << ',' << r.mean_seconds << ','
       << r.mean_condition_seconds << ',' << r.mean_image_seconds << ','
       << r.mean_selected_recall << '\n';
  }
  return os.str();
}

nlohmann::json TimingJson(std::span<const TimingRow> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const TimingRow& r : rows) {
    out.push_back({{"name", r.name},
                   {"mode", r.full_images ? "full_images" : "sbpc"},
                   {"n", r.n},
                   {"t_cond", r.t_cond},
                   {"t_img", r.t_img},
                   {"mean_seconds", r.mean_seconds},
                   {"mean_condition_seconds", r.mean_condition_seconds},
                   {"mean_image_seconds", r.mean_image_seconds},
                   {"mean_selected_recall", r.mean_selected_recall}});
  }
  return out;
}

}  // namespace fgdm
