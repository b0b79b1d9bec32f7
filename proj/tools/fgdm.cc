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

// fgdm: dataset / train / sample / sbpc / eval / serve / init-config.
//
// Exit codes: 0 success, 2 bad configuration or arguments, 3 missing
// checkpoint, 4 I/O failure, 1 anything else.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fgdm/codec/ppm.h"
#include "fgdm/numerics/checkpoint.h"
#include "fgdm/sbpc/sbpc.h"
#include "fgdm/service/run.h"
#include "fgdm/service/service.h"

namespace fs = std::filesystem;

namespace fgdm {
namespace {

constexpr int kExitConfig = 2;
constexpr int kExitCheckpoint = 3;
constexpr int kExitIo = 4;

double Seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void WriteJson(const fs::path& path, const nlohmann::json& j) {
  WriteFileBytes(path, j.dump(2) + "\n");
}

std::vector<std::string> ReadPrompts(const fs::path& path) {
  std::istringstream in(ReadFileBytes(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    out.push_back(line.substr(first, line.find_last_not_of(" \t\r") - first + 1));
  }
  if (out.empty()) throw std::invalid_argument(path.string() + " holds no prompts");
  return out;
}

// Held-out prompts from the dataset's validation split.
std::vector<std::string> ValPrompts(const RunConfig& config, int limit) {
  const Dataset ds = LoadDataset(config.dataset.path);
  std::vector<std::string> out;
  for (int i : ds.val) {
    if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
    out.push_back(ds.records[i].prompt);
  }
  return out;
}

int CmdDataset(const RunConfig& config, const std::string& out) {
  const fs::path dir = out.empty() ? fs::path(config.dataset.path) : fs::path(out);
  const auto start = std::chrono::steady_clock::now();
  const Dataset ds = GenerateDataset(config.dataset.size, config.dataset.val,
                                           config.dataset.seed, config.dataset.world);
  SaveDataset(ds, dir);
  std::cout << "wrote " << ds.records.size() << " scenes (" << ds.train.size() << " train, "
            << ds.val.size() << " val) to " << dir.string() << " in " << Seconds(start)
            << " s\n";
  return 0;
}

int CmdTrain(const RunConfig& config, int steps, int log_every) {
  const Dataset ds = LoadDataset(config.dataset.path);
  fs::create_directories(config.output_dir);
  std::ofstream log(fs::path(config.output_dir) / "train_log.jsonl", std::ios::app);
  const auto start = std::chrono::steady_clock::now();
  const TrainSummary s = TrainRun(config, ds, steps, [&](const TrainProgress& p) {
    nlohmann::json line = {{"stage", StageName(p.stage)},
                           {"step", p.stage_step},
                           {"total", p.loss.total},
                           {"kl", p.loss.kl},
                           {"mse", p.loss.factor_mse}};
    log << line.dump() << "\n";
    if (log_every > 0 && p.stage_step % log_every == 0) {
      std::cout << StageName(p.stage) << " step " << p.stage_step << " loss " << p.loss.total
                << " (" << Seconds(start) << " s)" << std::endl;
    }
  });
  std::cout << "teacher steps " << s.teacher_steps << ", factor steps " << s.factor_steps
            << (s.finished ? " (finished)" : "") << "; checkpoint "
            << config.checkpoint_path().string() << "\n";
  return 0;
}

int CmdSample(const RunConfig& config, const std::string& prompt, uint64_t seed, int n,
           int steps, const std::string& mode, const std::string& out) {
  const auto model = LoadTrainedModel(config);
  SampleOptions o;
  o.sampler = config.sampler;
  if (steps > 0) o.sampler.steps = steps;
  if (mode == "sequential") {
    o.mode = InferenceMode::kSequential;
  } else if (mode != "joint") {
    throw std::invalid_argument("--mode must be joint or sequential");
  }
  const Vocabulary vocab(config.dataset.world.num_classes);
  std::vector<SampleRequest> req;
  for (int i = 0; i < n; ++i) req.push_back({vocab.Encode(prompt), seed + i});
  const JointSample s = RunGraph(config.graph, *model, req, o);

  const fs::path dir = out.empty() ? fs::path(config.output_dir) / "samples" /
                                         ("seed-" + std::to_string(seed))
                                   : fs::path(out);
  fs::create_directories(dir);
  const Palette palette = WorldPalette(config.dataset.world);
  const std::set<int> targets = ExtractObjectClasses(prompt, vocab);
  nlohmann::json examples = nlohmann::json::array();
  for (int b = 0; b < n; ++b) {
    nlohmann::json e = {{"seed", seed + b}};
    for (const auto& [v, t] : s.latents) {
      const std::string file = v + "_" + std::to_string(b) + ".ppm";
      WriteFileBytes(dir / file, LatentPpm(SliceBatch(t, b)));
      e["files"][v] = file;
      if (config.graph.factor(v).kind == VariableKind::kSegmentation && !targets.empty()) {
        const LabelMap labels = DecodeMap(UnitImageFromLatent(SliceBatch(t, b)), palette,
                                          palette.margin());
        e["recall"][v] = ComputeRecall(labels, targets, config.sbpc.min_pixels);
      }
    }
    examples.push_back(e);
  }
  WriteJson(dir / "sample.json", {{"prompt", prompt},
                                  {"mode", mode},
                                  {"steps", o.sampler.steps},
                                  {"guidance_scale", o.sampler.guidance_scale},
                                  {"examples", examples}});
  std::cout << "wrote " << n << " samples to " << dir.string() << "\n";
  return 0;
}

std::string ReportCsv(const std::vector<RecallReport>& reports) {
  std::ostringstream os;
  os << "prompt,n,t_cond,t_img,selected,selected_recall,avg,min,max,median,"
        "at_least_0.5,at_least_0.75,at_least_0.9\n";
  for (const RecallReport& r : reports) {
    os << '"' << r.prompt << "\"," << r.n() << ',' << r.t_cond << ',' << r.t_img << ','
       << r.selected << ',' << r.selected_recall() << ',' << r.avg << ',' << r.min << ','
       << r.max << ',' << r.median << ',' << r.at_least[0] << ',' << r.at_least[1] << ','
       << r.at_least[2] << '\n';
  }
  return os.str();
}

struct SbpcArgs {
  std::string prompts_file;
  std::string prompt;
  int limit = 200;
  int n = -1;
  int t_cond = -1;
  int t_img = -1;
  uint64_t seed = 0;
  std::string out;
  double recall_target = 0.0;
  int max_trials = 10;
  bool timing = false;
};

int CmdSbpc(const RunConfig& config, const SbpcArgs& a) {
  const auto model = LoadTrainedModel(config);
  SbpcConfig c = config.sbpc;
  if (a.n > 0) c.n = a.n;
  if (a.t_cond > 0) c.t_cond = a.t_cond;
  if (a.t_img > 0) c.t_img = a.t_img;
  c.Validate();
  std::vector<std::string> prompts;
  if (!a.prompt.empty()) {
    prompts = {a.prompt};
  } else if (!a.prompts_file.empty()) {
    prompts = ReadPrompts(a.prompts_file);
  } else {
    prompts = ValPrompts(config, a.limit);
  }
  const Sbpc sbpc(config.graph, *model, WorldPalette(config.dataset.world),
                  Vocabulary(config.dataset.world.num_classes));
  const fs::path dir = a.out.empty() ? fs::path(config.output_dir) / "sbpc" : fs::path(a.out);
  fs::create_directories(dir / "images");

  std::vector<RecallReport> reports;
  nlohmann::json timing = nlohmann::json::array();
  nlohmann::json report_list = nlohmann::json::array();
  for (size_t p = 0; p < prompts.size(); ++p) {
    const SbpcResult r = sbpc.Run(prompts[p], c, a.seed + 1000 * p);
    reports.push_back(r.report);
    report_list.push_back(r.report.ToJson());
    timing.push_back({{"prompt", prompts[p]},
                      {"condition", r.report.seconds.condition},
                      {"scoring", r.report.seconds.scoring},
                      {"image", r.report.seconds.image}});
    const std::string stem = "prompt_" + std::to_string(p);
    WriteFileBytes(dir / "images" / (stem + "_image.ppm"),
                   LatentPpm(r.sample.latents.at(kImageVariable)));
    WriteFileBytes(dir / "images" / (stem + "_" + sbpc.segmentation_variable() + ".ppm"),
                   LatentPpm(r.sample.latents.at(sbpc.segmentation_variable())));
  }
  WriteJson(dir / "report.json", {{"config", c.ToJson()},
                                  {"base_seed", a.seed},
                                  {"aggregate", AggregateReports(reports)},
                                  {"reports", report_list}});
  WriteFileBytes(dir / "report.csv", ReportCsv(reports));
  WriteJson(dir / "timing.json", timing);

  if (a.recall_target > 0.0) {
    std::vector<TrialsResult> trials;
    nlohmann::json per_prompt = nlohmann::json::array();
    for (size_t p = 0; p < prompts.size(); ++p) {
      trials.push_back(sbpc.RecallTrials(prompts[p], a.recall_target, a.max_trials, c,
                                         a.seed + 1000 * p));
      per_prompt.push_back({{"prompt", prompts[p]}, {"trials", trials.back().Label(a.max_trials)}});
    }
    WriteJson(dir / "trials.json", {{"target_recall", a.recall_target},
                                    {"max_trials", a.max_trials},
                                    {"histogram", TrialsHistogram(trials, a.max_trials)},
                                    {"prompts", per_prompt}});
  }
  if (a.timing) {
    SbpcConfig one = c;
    one.n = 1;
    const std::vector<TimingCase> cases = {
        {"sbpc_n" + std::to_string(c.n), c, false},
        {"sbpc_n1", one, false},
        {"full_images_n" + std::to_string(c.n), c, true}};
    const auto rows = RunTimingHarness(sbpc, cases, prompts, a.seed);
    WriteFileBytes(dir / "timing_table.csv", TimingCsv(rows));
    WriteJson(dir / "timing_table.json", TimingJson(rows));
  }
  const nlohmann::json agg = AggregateReports(reports);
  std::cout << "SBPC over " << prompts.size() << " prompts: mean selected recall "
            << agg.at("mean_selected_recall").get<double>() << "; report in "
            << dir.string() << "\n";
  return 0;
}

struct ModeEval {
  double frechet = 0.0;
  double mean_recall = 0.0;
  double seconds = 0.0;
};

int CmdEval(const RunConfig& config, int limit, int steps, int batch, const std::string& out) {
  const auto model = LoadTrainedModel(config);
  const Dataset ds = LoadDataset(config.dataset.path);
  const Vocabulary vocab = ds.vocabulary();
  const Palette palette = ds.palette();
  std::vector<int> ids;
  for (int i : ds.val) {
    if (limit > 0 && static_cast<int>(ids.size()) >= limit) break;
    ids.push_back(i);
  }
  if (ids.size() < 2) throw std::invalid_argument("eval needs at least two validation scenes");
  const int d = kPoolGrid * kPoolGrid * 3;
  MatrixD real(static_cast<Eigen::Index>(ids.size()), d);
  for (size_t k = 0; k < ids.size(); ++k) {
    const auto f = PooledFeatures(ds.records[ids[k]].image);
    for (int c = 0; c < d; ++c) real(k, c) = f[c];
  }
  std::string seg;
  for (const FactorSpec& f : config.graph.factors) {
    if (seg.empty() && f.kind == VariableKind::kSegmentation) seg = f.output;
  }

  nlohmann::json modes = nlohmann::json::object();
  for (InferenceMode mode : {InferenceMode::kJoint, InferenceMode::kSequential}) {
    SampleOptions o;
    o.mode = mode;
    o.sampler = config.sampler;
    if (steps > 0) o.sampler.steps = steps;
    MatrixD fake(static_cast<Eigen::Index>(ids.size()), d);
    ModeEval m;
    int scored = 0;
    for (size_t start = 0; start < ids.size(); start += batch) {
      std::vector<SampleRequest> req;
      for (size_t k = start; k < std::min(ids.size(), start + batch); ++k) {
        req.push_back({vocab.Encode(ds.records[ids[k]].prompt), config.seed + k});
      }
      const JointSample s = RunGraph(config.graph, *model, req, o);
      for (const auto& [f, sec] : s.seconds) m.seconds += sec;
      for (size_t b = 0; b < req.size(); ++b) {
        const auto f = PooledFeatures(UnitImageFromLatent(s.Latent(kImageVariable, b)));
        for (int c = 0; c < d; ++c) fake(start + b, c) = f[c];
        const std::set<int> targets = ExtractObjectClasses(req[b].prompt, vocab);
        if (!seg.empty() && !targets.empty()) {
          const LabelMap labels =
              DecodeMap(UnitImageFromLatent(s.Latent(seg, b)), palette, palette.margin());
          m.mean_recall += ComputeRecall(labels, targets, config.sbpc.min_pixels);
          ++scored;
        }
      }
    }
    m.frechet = FrechetDistance(real, fake);
    if (scored) m.mean_recall /= scored;
    const std::string name = mode == InferenceMode::kJoint ? "joint" : "sequential";
    modes[name] = {{"frechet_pooled", m.frechet},
                   {"mean_recall", m.mean_recall},
                   {"sampling_seconds", m.seconds}};
    std::cout << name << ": frechet " << m.frechet << ", recall " << m.mean_recall << ", "
              << m.seconds << " s\n";
  }
  const double j = modes["joint"]["frechet_pooled"].get<double>();
  const double q = modes["sequential"]["frechet_pooled"].get<double>();
  const fs::path dir = out.empty() ? fs::path(config.output_dir) / "eval" : fs::path(out);
  fs::create_directories(dir);
  WriteJson(dir / "eval.json",
            {{"scenes", ids.size()},
             {"steps", steps > 0 ? steps : config.sampler.steps},
             {"features", "4x4 average-pooled RGB (d=48); not comparable to Inception FID"},
             {"modes", modes},
             {"lower_frechet", j < q ? "joint" : (q < j ? "sequential" : "tie")}});
  std::cout << "eval report in " << (dir / "eval.json").string() << "\n";
  return 0;
}

int CmdServe(const RunConfig& config, const std::string& host, int port,
          const std::string& jobs_dir) {
  const auto model = LoadTrainedModel(config);
  const fs::path dir = jobs_dir.empty() ? fs::path(config.output_dir) / "jobs" : fs::path(jobs_dir);
  Service service(config, *model, dir);
  const int bound = service.Start(host, port);
  std::cout << "serving on http://" << host << ":" << bound << std::endl;
  service.Wait();
  return 0;
}

}  // namespace
}  // namespace fgdm

int main(int argc, char** argv) {
  using namespace fgdm;
  CLI::App app{"Factor graph diffusion models on a toy shape world"};
  app.require_subcommand(1);
  std::string config_path;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
  };

  std::string out;
  auto* dataset = app.add_subcommand("dataset", "Generate the toy dataset");
  add_config(dataset);
  dataset->add_option("--out", out, "Dataset directory (default: config dataset.path)");

  int steps = -1;
  int log_every = 100;
  auto* train = app.add_subcommand("train", "Teacher pretraining, then factor training");
  add_config(train);
  train->add_option("--steps", steps, "Optimizer steps to run in this call (default: all)");
  train->add_option("--log-every", log_every, "Progress line interval");

  std::string prompt;
  uint64_t seed = 0;
  int n = 1;
  std::string mode = "joint";
  auto* sample = app.add_subcommand("sample", "Sample conditions and images");
  add_config(sample);
  sample->add_option("--prompt", prompt, "Prompt text")->required();
  sample->add_option("--seed", seed, "First seed");
  sample->add_option("--n", n, "Number of seeds")->check(CLI::PositiveNumber);
  sample->add_option("--steps", steps, "Sampler steps (default: config)");
  sample->add_option("--mode", mode, "joint or sequential");
  sample->add_option("--out", out, "Output directory");

  SbpcArgs sa;
  auto* sbpc = app.add_subcommand("sbpc", "Sampling-based prompt compliance");
  add_config(sbpc);
  sbpc->add_option("--prompts", sa.prompts_file, "Prompt file, one per line");
  sbpc->add_option("--prompt", sa.prompt, "Single prompt");
  sbpc->add_option("--limit", sa.limit, "Validation prompts to use when no prompt is given");
  sbpc->add_option("--n", sa.n, "Seeds per prompt");
  sbpc->add_option("--t-cond", sa.t_cond, "Condition steps");
  sbpc->add_option("--t-img", sa.t_img, "Image steps");
  sbpc->add_option("--seed", sa.seed, "Base seed");
  sbpc->add_option("--out", sa.out, "Output directory");
  sbpc->add_option("--recall-target", sa.recall_target, "Also count trials to reach this recall");
  sbpc->add_option("--max-trials", sa.max_trials, "Trial cap for --recall-target");
  sbpc->add_flag("--timing", sa.timing, "Also run the timing comparison");

  int limit = 200;
  int batch = 20;
  auto* eval = app.add_subcommand("eval", "Frechet distance and recall, joint vs sequential");
  add_config(eval);
  eval->add_option("--limit", limit, "Validation scenes");
  eval->add_option("--steps", steps, "Sampler steps (default: config)");
  eval->add_option("--batch", batch, "Sampling batch size")->check(CLI::PositiveNumber);
  eval->add_option("--out", out, "Output directory");

  std::string host;
  int port = -1;
  std::string jobs_dir;
  auto* serve = app.add_subcommand("serve", "HTTP editing service");
  add_config(serve);
  serve->add_option("--host", host, "Bind address (default: config)");
  serve->add_option("--port", port, "Port, 0 for any (default: config)");
  serve->add_option("--jobs-dir", jobs_dir, "Per-job directories");

  auto* init = app.add_subcommand("init-config", "Print the default toy run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*init) {
      std::cout << RunConfig::Toy().ToJson().dump(2) << "\n";
      return 0;
    }
    const RunConfig config = RunConfig::Load(config_path);
    if (*dataset) return CmdDataset(config, out);
    if (*train) return CmdTrain(config, steps, log_every);
    if (*sample) return CmdSample(config, prompt, seed, n, steps, mode, out);
    if (*sbpc) return CmdSbpc(config, sa);
    if (*eval) return CmdEval(config, limit, steps, batch, out);
    if (*serve) {
      return CmdServe(config, host.empty() ? config.service.host : host,
                   port < 0 ? config.service.port : port, jobs_dir);
    }
  } catch (const MissingCheckpoint& e) {
    std::cerr << "fgdm: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::invalid_argument& e) {
    std::cerr << "fgdm: invalid configuration: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "fgdm: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "fgdm: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "fgdm: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "fgdm: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
