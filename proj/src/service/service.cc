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

#include "fgdm/service/service.h"

#include <chrono>
#include <future>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "httplib.h"

#include "fgdm/codec/ppm.h"
#include "fgdm/numerics/checkpoint.h"
#include "fgdm/numerics/json_keys.h"

namespace fgdm {
namespace {

constexpr int kMaxReportedPixels = 100;

double Now() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

ApiResponse Error(int status, const std::string& message, nlohmann::json extra = {}) {
  nlohmann::json body = {{"error", message}};
  if (extra.is_object()) body.update(extra);
  return {status, body};
}

std::vector<std::string> Split(const std::string& path) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(path);
  while (std::getline(in, part, '/')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

// Bad requests with a payload for the client.
struct BadRequest : std::invalid_argument {
  BadRequest(const std::string& m, nlohmann::json d)
      : std::invalid_argument(m), details(std::move(d)) {}
  nlohmann::json details;
};

}  // namespace

WorkerPool::WorkerPool(int workers) {
  if (workers < 1) throw std::invalid_argument("worker pool needs at least one thread");
  for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { Loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (std::thread& t : threads_) t.join();
}

void WorkerPool::Submit(std::function<void()> task) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
}

void WorkerPool::Loop() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

std::string LatentPpm(const Tensor& latent) { return EncodePpm(UnitImageFromLatent(latent)); }

struct Service::Job {
  std::string id;
  std::string prompt;
  uint64_t seed = 0;
  int steps = 0;
  std::string status = "pending";
  std::string error;
  double created_at = 0.0;
  double updated_at = 0.0;
  JointSample conditions;
  std::map<std::string, Tensor> edited;
  std::map<std::string, Tensor> fed;
  Tensor image;
};

struct Service::Http {
  httplib::Server server;
  std::thread thread;
};

Service::Service(RunConfig config, const EpsModel& model, std::filesystem::path jobs_dir)
    : config_(std::move(config)),
      model_(model),
      jobs_dir_(std::move(jobs_dir)),
      palette_(WorldPalette(config_.dataset.world)),
      vocab_(config_.dataset.world.num_classes),
      pool_(std::make_unique<WorkerPool>(config_.service.workers)) {
  config_.Validate();
  const GraphSpec& g = config_.graph;
  for (int i = 0; i < g.num_factors(); ++i) {
    if (i != g.image_index()) conditions_.insert(g.factors[i].output);
  }
  std::filesystem::create_directories(jobs_dir_);
}

Service::~Service() {
  Stop();
  pool_.reset();  // drain queued work before the jobs go away
}

void Service::RunOnPool(const std::function<void()>& task) {
  std::promise<void> done;
  std::future<void> wait = done.get_future();
  pool_->Submit([&] {
    try {
      task();
      done.set_value();
    } catch (...) {
      done.set_exception(std::current_exception());
    }
  });
  wait.get();
}

ApiResponse Service::Handle(const std::string& method, const std::string& path,
                            const std::string& body) {
  const std::vector<std::string> parts = Split(path);
  try {
    nlohmann::json request = nlohmann::json::object();
    if (method == "POST" && !body.empty()) {
      try {
        request = nlohmann::json::parse(body);
      } catch (const nlohmann::json::parse_error& e) {
        return Error(400, std::string("request body is not JSON: ") + e.what());
      }
    }
    if (method == "GET" && parts == std::vector<std::string>{"factors"}) return Factors();
    if (method == "GET" && parts == std::vector<std::string>{"palette"}) {
      return {200, palette_.ToJson()};
    }
    if (!parts.empty() && parts[0] == "jobs") {
      if (parts.size() == 1 && method == "POST") return CreateJob(request);
      if (parts.size() == 2 && method == "GET") return GetJob(parts[1]);
      if (parts.size() == 3 && method == "POST" && parts[2] == "conditions") {
        return UploadConditions(parts[1], request);
      }
      if (parts.size() == 3 && method == "POST" && parts[2] == "generate") {
        return Generate(parts[1]);
      }
    }
    return Error(404, "no route for " + method + " " + path);
  } catch (const BadRequest& e) {
    return Error(400, e.what(), e.details);
  } catch (const std::invalid_argument& e) {
    return Error(400, e.what());
  } catch (const FormatError& e) {
    return Error(400, e.what());
  } catch (const nlohmann::json::exception& e) {
    return Error(400, e.what());
  } catch (const std::exception& e) {
    return Error(500, e.what());
  }
}

ApiResponse Service::Factors() const {
  nlohmann::json out = nlohmann::json::array();
  for (const FactorSpec& f : config_.graph.factors) {
    out.push_back({{"name", f.name},
                   {"output", f.output},
                   {"kind", ToString(f.kind)},
                   {"parents", f.parents},
                   {"height", f.height},
                   {"width", f.width},
                   {"mode", ToString(f.mode)},
                   {"condition", conditions_.count(f.output) > 0}});
  }
  return {200, out};
}

std::shared_ptr<Service::Job> Service::Find(const std::string& id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = jobs_.find(id);
  return it == jobs_.end() ? nullptr : it->second;
}

ApiResponse Service::CreateJob(const nlohmann::json& request) {
  RequireKnownKeys(request, {"prompt", "seed", "steps", "async"}, "job request");
  if (!request.contains("prompt") || !request.at("prompt").is_string()) {
    throw std::invalid_argument("job request needs a string \"prompt\"");
  }
  auto job = std::make_shared<Job>();
  job->prompt = request.at("prompt").get<std::string>();
  job->seed = request.value("seed", uint64_t{0});
  job->steps = request.value("steps", config_.sampler.steps);
  SamplerConfig s = config_.sampler;
  s.steps = job->steps;
  s.Validate(NoiseSchedule(config_.graph.schedule).T());
  const bool async = request.value("async", false);
  job->created_at = job->updated_at = Now();
  {
    std::lock_guard<std::mutex> lock(mu_);
    std::ostringstream id;
    id << "job-" << std::setw(6) << std::setfill('0') << next_id_++;
    job->id = id.str();
    jobs_[job->id] = job;
  }
  Persist(*job);
  if (async) {
    pool_->Submit([this, job] { RunConditions(job); });
    std::lock_guard<std::mutex> lock(mu_);
    return {202, JobJson(*job)};
  }
  RunOnPool([this, job] { RunConditions(job); });
  std::lock_guard<std::mutex> lock(mu_);
  return {job->status == "failed" ? 500 : 201, JobJson(*job)};
}

void Service::RunConditions(const std::shared_ptr<Job>& job) {
  SampleOptions o;
  o.sampler = config_.sampler;
  o.sampler.steps = job->steps;
  o.keep_trajectories = true;
  const std::vector<SampleRequest> req = {{vocab_.Encode(job->prompt), job->seed}};
  try {
    JointSample s = SampleSubset(config_.graph, model_, conditions_, req, o, conditions_);
    std::lock_guard<std::mutex> lock(mu_);
    job->conditions = std::move(s);
    job->status = "conditions_ready";
    job->updated_at = Now();
  } catch (const std::exception& e) {
    std::lock_guard<std::mutex> lock(mu_);
    job->status = "failed";
    job->error = e.what();
    job->updated_at = Now();
  }
  std::lock_guard<std::mutex> lock(mu_);
  Persist(*job);
}

ApiResponse Service::GetJob(const std::string& id) {
  auto job = Find(id);
  if (!job) return Error(404, "unknown job " + id);
  std::lock_guard<std::mutex> lock(mu_);
  return {200, JobJson(*job)};
}

ApiResponse Service::UploadConditions(const std::string& id, const nlohmann::json& request) {
  auto job = Find(id);
  if (!job) return Error(404, "unknown job " + id);
  RequireKnownKeys(request, {"maps"}, "conditions request");
  if (!request.contains("maps") || !request.at("maps").is_object()) {
    throw std::invalid_argument("conditions request needs a \"maps\" object");
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (job->status != "conditions_ready" && job->status != "image_ready") {
      return Error(409, "job " + id + " has no conditions yet (status " + job->status + ")");
    }
  }
  // Validate everything before replacing anything.
  std::map<std::string, Tensor> accepted;
  for (const auto& [var, value] : request.at("maps").items()) {
    if (!conditions_.count(var)) {
      throw std::invalid_argument("\"" + var + "\" is not a condition variable");
    }
    const FactorSpec& f = config_.graph.factor(var);
    const Tensor rgb = DecodePpm(Base64Decode(value.get<std::string>()));
    if (rgb.dim(0) != f.height || rgb.dim(1) != f.width) {
      throw BadRequest("map \"" + var + "\" has the wrong shape",
                       {{"variable", var},
                        {"expected", {f.height, f.width}},
                        {"got", {rgb.dim(0), rgb.dim(1)}}});
    }
    if (f.kind == VariableKind::kSegmentation) {
      const LabelMap labels = DecodeMap(rgb, palette_, palette_.margin());
      nlohmann::json pixels = nlohmann::json::array();
      int64_t bad = 0;
      for (int64_t y = 0; y < labels.height; ++y) {
        for (int64_t x = 0; x < labels.width; ++x) {
          if (labels.at(y, x) != LabelMap::kUnknown) continue;
          if (bad++ < kMaxReportedPixels) pixels.push_back({{"x", x}, {"y", y}});
        }
      }
      if (bad > 0) {
        throw BadRequest("map \"" + var + "\" has colors outside the palette margin",
                         {{"variable", var}, {"count", bad}, {"pixels", pixels}});
      }
      accepted[var] = LatentFromUnitImage(EncodeMap(labels, palette_));
    } else {
      Tensor depth({f.height, f.width});
      auto d = depth.mutable_data();
      auto x = rgb.data();
      for (size_t p = 0; p < d.size(); ++p) {
        d[p] = (x[p * 3] + x[p * 3 + 1] + x[p * 3 + 2]) / 3.0f;
      }
      accepted[var] = LatentFromDepth(depth);
    }
  }
  std::lock_guard<std::mutex> lock(mu_);
  for (auto& [var, latent] : accepted) job->edited[var] = std::move(latent);
  job->updated_at = Now();
  Persist(*job);
  return {204, nullptr};
}

ApiResponse Service::Generate(const std::string& id) {
  auto job = Find(id);
  if (!job) return Error(404, "unknown job " + id);
  SampleOptions o;
  std::vector<SampleRequest> req;
  std::map<std::string, Tensor> fed;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (job->status != "conditions_ready" && job->status != "image_ready") {
      return Error(409, "job " + id + " has no conditions yet (status " + job->status + ")");
    }
    o.sampler = config_.sampler;
    o.sampler.steps = job->steps;
    for (const std::string& v : conditions_) {
      auto e = job->edited.find(v);
      if (e != job->edited.end()) {
        o.sources[v] = VariableSource::Renoised(e->second);
        fed[v] = e->second;
      } else {
        o.sources[v] = VariableSource::Trajectory(job->conditions.trajectories.at(v));
        fed[v] = job->conditions.latents.at(v);
      }
    }
    req = {{vocab_.Encode(job->prompt), job->seed}};
  }
  JointSample result;
  RunOnPool([&] { result = RunGraph(config_.graph, model_, req, o); });
  std::lock_guard<std::mutex> lock(mu_);
  job->image = result.latents.at(kImageVariable);
  job->fed = fed;
  job->status = "image_ready";
  job->updated_at = Now();
  Persist(*job);
  nlohmann::json fed_json = nlohmann::json::object();
  for (const auto& [v, t] : fed) fed_json[v] = Base64Encode(LatentPpm(t));
  return {200, {{"id", job->id},
                {"image", Base64Encode(LatentPpm(job->image))},
                {"conditions_fed", fed_json}}};
}

nlohmann::json Service::JobJson(const Job& job) const {
  nlohmann::json j = {{"id", job.id},
                      {"prompt", job.prompt},
                      {"seed", job.seed},
                      {"steps", job.steps},
                      {"status", job.status},
                      {"created_at", job.created_at},
                      {"updated_at", job.updated_at}};
  if (!job.error.empty()) j["error"] = job.error;
  nlohmann::json edited = nlohmann::json::array();
  for (const auto& [v, t] : job.edited) edited.push_back(v);
  j["edited"] = edited;
  if (job.status == "conditions_ready" || job.status == "image_ready") {
    nlohmann::json maps = nlohmann::json::object();
    for (const std::string& v : conditions_) {
      const FactorSpec& f = config_.graph.factor(v);
      maps[v] = {{"kind", ToString(f.kind)},
                 {"height", f.height},
                 {"width", f.width},
                 {"ppm", Base64Encode(LatentPpm(job.conditions.latents.at(v)))}};
    }
    j["conditions"] = maps;
  }
  if (job.status == "image_ready") {
    j["image"] = Base64Encode(LatentPpm(job.image));
    nlohmann::json fed = nlohmann::json::object();
    for (const auto& [v, t] : job.fed) fed[v] = Base64Encode(LatentPpm(t));
    j["conditions_fed"] = fed;
  }
  return j;
}

// Caller holds mu_.
void Service::Persist(const Job& job) const {
  const std::filesystem::path dir = jobs_dir_ / job.id;
  try {
    std::filesystem::create_directories(dir);
    nlohmann::json j = JobJson(job);
    j.erase("conditions");
    j.erase("image");
    j.erase("conditions_fed");
    WriteFileBytes(dir / "job.json", j.dump(2) + "\n");
    if (job.status == "conditions_ready" || job.status == "image_ready") {
      for (const auto& [v, t] : job.conditions.latents) {
        WriteFileBytes(dir / (v + ".ppm"), LatentPpm(t));
      }
    }
    for (const auto& [v, t] : job.edited) {
      WriteFileBytes(dir / ("edited_" + v + ".ppm"), LatentPpm(t));
    }
    if (job.status == "image_ready") WriteFileBytes(dir / "image.ppm", LatentPpm(job.image));
  } catch (const std::exception&) {
    // The directory is for inspection only; serving continues without it.
  }
}

int Service::Start(const std::string& host, int port) {
  if (http_) throw std::logic_error("service already started");
  http_ = std::make_unique<Http>();
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const ApiResponse r = Handle(req.method, req.path, req.body);
    res.status = r.status;
    if (r.status != 204) res.set_content(r.body.dump(), "application/json");
  };
  http_->server.Get(R"(/.*)", handler);
  http_->server.Post(R"(/.*)", handler);
  int bound = port;
  if (port == 0) {
    bound = http_->server.bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
  } else if (!http_->server.bind_to_port(host, port)) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  http_->thread = std::thread([this] { http_->server.listen_after_bind(); });
  return bound;
}

void Service::Wait() {
  if (http_ && http_->thread.joinable()) http_->thread.join();
}

void Service::Stop() {
  if (!http_) return;
  http_->server.stop();
  if (http_->thread.joinable()) http_->thread.join();
  http_.reset();
}

}  // namespace fgdm
