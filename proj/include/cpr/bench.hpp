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

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cpr/pipeline.hpp"

namespace cpr {

struct LatencyStats {
  std::size_t samples = 0;
  double mean = 0.0;
  double min = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
  double max = 0.0;
};

// Linear interpolation between closest ranks; q in [0, 1].
double percentile(const std::vector<double>& sorted, double q);
LatencyStats summarize(std::vector<double> samples_ms);

// Defaults follow the usual protocol: run 2000 times, keep the last 1000.
struct BenchOptions {
  int iterations = 2000;
  int warmup = 1000;
  std::size_t threads = 1;
};

struct BenchReport {
  BenchOptions options;
  LatencyStats global;
  std::map<int, LatencyStats> local;
  LatencyStats fusion;
  LatencyStats total;
  std::uint32_t result_digest = 0;  // CRC over every query's DetectionResult
};

// Digest of the map bytes, score and neighbor list.
std::uint32_t result_digest(const DetectionResult& result);

// Cycles through `queries`; only iterations after the warmup are recorded.
BenchReport run_benchmark(const CprModel& model, const std::vector<std::map<int, FeatureTensor>>& queries,
                          const BenchOptions& options);

std::string bench_to_json(const BenchReport& report);

}  // namespace cpr
