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

#ifndef FGDM_SERVICE_SERVICE_H_
#define FGDM_SERVICE_SERVICE_H_

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgdm/graph/model.h"
#include "fgdm/graph/sampler.h"
#include "fgdm/service/run_config.h"
#include "fgdm/toyworld/toyworld.h"

namespace fgdm {

// Fixed set of threads draining a FIFO queue.
class WorkerPool {
 public:
  explicit WorkerPool(int workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void Submit(std::function<void()> task);

 private:
  void Loop();

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;  // null for 204
};

// A [1, 3, h, w] latent as P6 bytes.
std::string LatentPpm(const Tensor& latent);

// The editing service: condition sampling per job, validated edits, and one
// image pass per generate call. Jobs are held in memory and mirrored to
// jobs_dir/<id>/. Results depend only on (model, prompt, seed, steps, edits).
class Service {
 public:
  Service(RunConfig config, const EpsModel& model, std::filesystem::path jobs_dir);
  ~Service();

  // Routes one request. Paths: GET /factors, GET /palette, POST /jobs,
  // GET /jobs/{id}, POST /jobs/{id}/conditions, POST /jobs/{id}/generate.
  ApiResponse Handle(const std::string& method, const std::string& path,
                     const std::string& body);

  // Serves HTTP on a background thread. Port 0 picks a free port; returns
  // the bound port. IoError when binding fails.
  int Start(const std::string& host, int port);
  // Blocks until Stop() is called from elsewhere.
  void Wait();
  void Stop();

 private:
  struct Job;

  ApiResponse CreateJob(const nlohmann::json& request);
  ApiResponse GetJob(const std::string& id);
  ApiResponse UploadConditions(const std::string& id, const nlohmann::json& request);
  ApiResponse Generate(const std::string& id);
  ApiResponse Factors() const;

  void RunConditions(const std::shared_ptr<Job>& job);
  nlohmann::json JobJson(const Job& job) const;
  void Persist(const Job& job) const;
  std::shared_ptr<Job> Find(const std::string& id);
  // Runs `task` on the pool and waits for it.
  void RunOnPool(const std::function<void()>& task);

  RunConfig config_;
  const EpsModel& model_;
  std::filesystem::path jobs_dir_;
  Palette palette_;
  Vocabulary vocab_;
  std::set<std::string> conditions_;

  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  int next_id_ = 1;

  std::unique_ptr<WorkerPool> pool_;
  struct Http;
  std::unique_ptr<Http> http_;
};

}  // namespace fgdm

#endif  // FGDM_SERVICE_SERVICE_H_
