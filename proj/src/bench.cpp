/* Copyright 2026 The CPR Engine Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cpr/bench.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "byte_io.hpp"
#include "cpr/errors.hpp"
#include "cpr/model_io.hpp"
#include "cpr/worker_pool.hpp"

namespace cpr {

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

LatencyStats summarize(std::vector<double> samples) {
  LatencyStats s;
  s.samples = samples.size();
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  s.min = samples.front();
  s.max = samples.back();
  s.p50 = percentile(samples, 0.50);
  s.p90 = percentile(samples, 0.90);
  s.p95 = percentile(samples, 0.95);
  s.p99 = percentile(samples, 0.99);
  return s;
}

std::uint32_t result_digest(const DetectionResult& result) {
  detail::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(result.anomaly_map.rows()));
  w.u32(static_cast<std::uint32_t>(result.anomaly_map.cols()));
  for (Index i = 0; i < result.anomaly_map.size(); ++i) w.f32(result.anomaly_map.data()[i]);
  w.u64(std::bit_cast<std::uint64_t>(result.image_score));
  for (const auto& n : result.neighbors) {
    w.u64(static_cast<std::uint64_t>(n.index));
    w.u64(std::bit_cast<std::uint64_t>(n.distance));
  }
  return crc32(w.bytes());
}

BenchReport run_benchmark(const CprModel& model, const std::vector<std::map<int, FeatureTensor>>& queries,
                          const BenchOptions& options) {
  if (queries.empty()) throw StateError("benchmark needs at least one query");
  if (options.iterations < 1 || options.warmup < 0 || options.warmup >= options.iterations) {
    throw StateError("benchmark needs 0 <= warmup < iterations");
  }
  if (options.threads < 1) throw StateError("benchmark needs at least one thread");

  WorkerPool pool(options.threads);
  WorkerPool* p = options.threads > 1 ? &pool : nullptr;

  std::vector<double> global;
  std::vector<double> fusion;
  std::vector<double> total;
  std::map<int, std::vector<double>> local;
  for (int it = 0; it < options.iterations; ++it) {
    StageTimings t;
    const auto& q = queries[static_cast<std::size_t>(it) % queries.size()];
    const DetectionResult r = infer(model, q, p, &t);
    if (it < options.warmup) continue;
    global.push_back(t.global_ms);
    fusion.push_back(t.fusion_ms);
    total.push_back(t.total_ms);
    for (const auto& [scale, ms] : t.local_ms) local[scale].push_back(ms);
  }

  BenchReport report;
  report.options = options;
  report.global = summarize(std::move(global));
  report.fusion = summarize(std::move(fusion));
  report.total = summarize(std::move(total));
  for (auto& [scale, v] : local) report.local[scale] = summarize(std::move(v));

  detail::ByteWriter digests;
  for (const auto& q : queries) digests.u32(result_digest(infer(model, q, p)));
  report.result_digest = crc32(digests.bytes());
  return report;
}

namespace {

nlohmann::json stats_json(const LatencyStats& s) {
  return {{"samples", s.samples}, {"mean_ms", s.mean}, {"min_ms", s.min}, {"p50_ms", s.p50},
          {"p90_ms", s.p90},      {"p95_ms", s.p95},   {"p99_ms", s.p99}, {"max_ms", s.max}};
}

}  // namespace

std::string bench_to_json(const BenchReport& r) {
  nlohmann::json local = nlohmann::json::object();
  for (const auto& [scale, s] : r.local) local[std::to_string(scale)] = stats_json(s);
  nlohmann::json doc = {{"iterations", r.options.iterations},
                        {"warmup", r.options.warmup},
                        {"threads", r.options.threads},
                        {"measured", r.total.samples},
                        {"global_retrieval", stats_json(r.global)},
                        {"local_retrieval", local},
                        {"fusion", stats_json(r.fusion)},
                        {"total", stats_json(r.total)},
                        {"result_digest", r.result_digest}};
  return doc.dump();
}

}  // namespace cpr
