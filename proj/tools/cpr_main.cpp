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

// cpr: build / infer / eval / synth / bench front end.
// Exit codes: 0 ok, 1 usage, 2 data error, 3 runtime error.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "cpr/bench.hpp"
#include "cpr/errors.hpp"
#include "cpr/manifest.hpp"
#include "cpr/metrics.hpp"
#include "cpr/model_io.hpp"
#include "cpr/pipeline.hpp"
#include "cpr/synth.hpp"
#include "cpr/tensor.hpp"
#include "cpr/worker_pool.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

// Raised for flag values that parse but make no sense.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QueryImage {
  std::string image_id;
  std::map<int, cpr::FeatureTensor> tensors;
};

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("CPR_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto s = std::stoull(v, &used);
    if (used != std::char_traits<char>::length(v)) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw UsageError(std::string("CPR_SEED is not an unsigned integer: ") + v);
  }
}

// "<id>_s<scale>.cprt" groups by <id>; any other stem is its own image.
std::string image_id_from_path(const fs::path& p) {
  static const std::regex kScaleSuffix("^(.*)_s[0-9]+$");
  const std::string stem = p.stem().string();
  std::smatch m;
  if (std::regex_match(stem, m, kScaleSuffix)) return m[1].str();
  return stem;
}

std::vector<QueryImage> load_queries(const std::vector<std::string>& paths) {
  std::vector<QueryImage> out;
  if (paths.size() == 1 && fs::path(paths.front()).extension() == ".json") {
    const cpr::DatasetManifest manifest = cpr::load_manifest(paths.front());
    for (const auto& e : manifest.entries) out.push_back({e.image_id, cpr::load_entry_tensors(manifest, e)});
    return out;
  }
  std::map<std::string, std::size_t> slot;
  for (const auto& p : paths) {
    cpr::FeatureTensor t = cpr::read_tensor(p);
    const std::string id = image_id_from_path(p);
    auto [it, fresh] = slot.try_emplace(id, out.size());
    if (fresh) out.push_back({id, {}});
    auto& tensors = out[it->second].tensors;
    const int scale = t.scale_id();
    if (!tensors.emplace(scale, std::move(t)).second) {
      throw cpr::ArgumentError("two query tensors for image '" + id + "' at scale " + std::to_string(scale));
    }
  }
  return out;
}

void write_pgm(const cpr::ScoreGrid& map, const fs::path& path) {
  const float lo = map.minCoeff();
  const float hi = map.maxCoeff();
  const float range = hi - lo;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw cpr::WriteError("cannot open " + path.string() + " for writing");
  f << "P5\n" << map.cols() << ' ' << map.rows() << "\n255\n";
  for (cpr::Index i = 0; i < map.size(); ++i) {
    const float v = range > 0.0f ? (map.data()[i] - lo) / range : 0.0f;
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
  }
  if (!f) throw cpr::WriteError("failed writing " + path.string());
}

json shape_json(const cpr::TensorHeader& h) { return json::array({h.height, h.width, h.channels}); }

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::string read_text(const fs::path& p) {
  const auto bytes = cpr::read_file_bytes(p);
  return {bytes.begin(), bytes.end()};
}

// --- build -----------------------------------------------------------------

struct BuildArgs {
  std::string manifest;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

int run_build(const BuildArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  // Precedence, lowest first: defaults, CPR_SEED, --config file, flags.
  cpr::CprConfig cfg;
  if (auto s = env_seed()) cfg.seed = *s;
  if (!a.config.empty()) cfg = cpr::config_from_json(read_text(a.config), cfg);
  if (a.seed) cfg.seed = *a.seed;

  const cpr::DatasetManifest manifest = cpr::load_manifest(a.manifest);
  cpr::WorkerPool pool(a.threads);
  cpr::BuildInfo info;
  const cpr::CprModel model = cpr::build_model(manifest, cfg, &info, a.threads > 1 ? &pool : nullptr);
  const double build_ms = elapsed_ms(start);
  cpr::save_model(model, a.out);

  json shapes = json::object();
  for (const auto& [scale, h] : manifest.scale_shapes) shapes[std::to_string(scale)] = shape_json(h);
  for (const auto& w : info.warnings) std::cerr << "warning: " << w << '\n';
  json summary = {{"command", "build"},
                  {"model", a.out},
                  {"n_references", model.size()},
                  {"shapes", shapes},
                  {"n_clusters", model.codebook.n_clusters()},
                  {"kmeans_iterations", info.kmeans_iterations},
                  {"codebook_vectors", info.codebook_vectors},
                  {"feb_enabled", model.feb.has_value()},
                  {"warnings", info.warnings},
                  {"timings_ms", {{"build", build_ms}, {"total", elapsed_ms(start)}}}};
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

// --- infer -----------------------------------------------------------------

struct InferArgs {
  std::string model;
  std::vector<std::string> query;
  std::string out;
  std::size_t threads = 1;
  bool pgm = false;
};

int run_infer(const InferArgs& a) {
  const cpr::CprModel model = cpr::load_model(a.model);
  const std::vector<QueryImage> queries = load_queries(a.query);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw cpr::WriteError("cannot create " + a.out + ": " + ec.message());

  cpr::WorkerPool pool(a.threads);
  std::ofstream index(fs::path(a.out) / "index.jsonl", std::ios::trunc);
  if (!index) throw cpr::WriteError("cannot open index.jsonl in " + a.out);
  for (const auto& q : queries) {
    const cpr::DetectionResult r = cpr::infer(model, q.tensors, a.threads > 1 ? &pool : nullptr);
    const std::string map_name = q.image_id + ".cprt";
    cpr::write_tensor(cpr::grid_to_tensor(r.anomaly_map), fs::path(a.out) / map_name);
    if (a.pgm) write_pgm(r.anomaly_map, fs::path(a.out) / (q.image_id + ".pgm"));

    json neighbors = json::array();
    for (const auto& n : r.neighbors) {
      neighbors.push_back({{"image_id", model.global_index.image_ids[static_cast<std::size_t>(n.index)]},
                           {"distance", n.distance}});
    }
    const json line = {{"image_id", q.image_id},
                       {"image_score", r.image_score},
                       {"map_path", map_name},
                       {"neighbors", neighbors}};
    index << line.dump() << '\n';
    std::cout << line.dump() << '\n';
  }
  if (!index) throw cpr::WriteError("failed writing index.jsonl");
  return kExitOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string truth;
  double fpr_limit = 0.3;
};

int run_eval(const EvalArgs& a) {
  if (!(a.fpr_limit > 0.0 && a.fpr_limit <= 1.0)) throw UsageError("--fpr-limit must lie in (0, 1]");
  const fs::path index_path = fs::path(a.pred) / "index.jsonl";
  std::ifstream index(index_path);
  if (!index) throw cpr::ReadError("cannot open " + index_path.string());

  struct Prediction {
    double score;
    fs::path map;
  };
  std::map<std::string, Prediction> preds;
  std::string line;
  for (int n = 1; std::getline(index, line); ++n) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      preds[j.at("image_id").get<std::string>()] = {j.at("image_score").get<double>(),
                                                    fs::path(a.pred) / j.at("map_path").get<std::string>()};
    } catch (const json::exception& e) {
      throw cpr::ArgumentError(index_path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }

  const cpr::DatasetManifest truth = cpr::load_manifest(a.truth);
  std::vector<cpr::EvaluatedImage> images;
  images.reserve(truth.entries.size());
  for (const auto& e : truth.entries) {
    const auto it = preds.find(e.image_id);
    if (it == preds.end()) throw cpr::ArgumentError("no prediction for image '" + e.image_id + "'");
    cpr::EvaluatedImage img;
    img.image_id = e.image_id;
    img.image_score = it->second.score;
    img.anomaly_map = cpr::tensor_to_grid(cpr::read_tensor(it->second.map));
    img.label = e.label;
    if (e.ground_truth_mask_path) img.ground_truth = cpr::tensor_to_grid(cpr::read_tensor(truth.resolve(*e.ground_truth_mask_path)));
    images.push_back(std::move(img));
  }
  std::cout << cpr::report_to_json(cpr::evaluate(images, a.fpr_limit)) << '\n';
  return kExitOk;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  long long n_normal = 20;
  long long n_anomalous = 10;
  std::optional<std::uint64_t> seed;
  std::vector<long long> grid = {32, 32};
  long long dim = 16;
};

int run_synth(const SynthArgs& a) {
  cpr::SynthOptions opt;
  opt.n_normal = a.n_normal;
  opt.n_anomalous = a.n_anomalous;
  opt.seed = a.seed ? *a.seed : env_seed().value_or(0);
  opt.height = a.grid.at(0);
  opt.width = a.grid.at(1);
  opt.channels = a.dim;
  try {
    opt.validate();
  } catch (const cpr::ArgumentError& e) {
    throw UsageError(e.what());
  }
  const cpr::SynthFiles files = cpr::write_synthetic(cpr::generate_synthetic(opt), a.out);
  const json summary = {{"command", "synth"},
                        {"seed", opt.seed},
                        {"n_images", opt.n_normal + opt.n_anomalous},
                        {"manifest", files.manifest.string()},
                        {"train", files.train.string()},
                        {"test", files.test.string()}};
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

// --- bench -----------------------------------------------------------------

struct BenchArgs {
  std::string model;
  std::vector<std::string> query;
  int iters = 2000;
  int warmup = 1000;
  std::size_t threads = 1;
};

int run_bench(const BenchArgs& a) {
  // Any failure before timing starts is a setup failure.
  try {
    const cpr::CprModel model = cpr::load_model(a.model);
    std::vector<std::map<int, cpr::FeatureTensor>> queries;
    for (auto& q : load_queries(a.query)) queries.push_back(std::move(q.tensors));
    cpr::BenchOptions opt;
    opt.iterations = a.iters;
    opt.warmup = a.warmup;
    opt.threads = a.threads;
    std::cout << cpr::bench_to_json(cpr::run_benchmark(model, queries, opt)) << '\n';
  } catch (const cpr::Error& e) {
    std::cerr << "cpr bench: setup failed: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-retrieval anomaly detection engine"};
  app.require_subcommand(1);

  BuildArgs build;
  auto* b = app.add_subcommand("build", "Fit a model bundle from normal reference tensors");
  b->add_option("--manifest", build.manifest, "Reference manifest (JSON)")->required();
  b->add_option("--config", build.config, "Config JSON; flags override it");
  b->add_option("--out", build.out, "Output bundle path")->required();
  b->add_option("--seed", build.seed, "RNG seed (fallback: CPR_SEED)");
  b->add_option("--threads", build.threads, "Worker threads")->check(CLI::PositiveNumber);

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Score query images");
  i->add_option("--model", infer.model, "Model bundle")->required();
  i->add_option("--query", infer.query, "Query manifest or CPRT files")->required();
  i->add_option("--out", infer.out, "Output directory")->required();
  i->add_option("--threads", infer.threads, "Worker threads")->check(CLI::PositiveNumber);
  i->add_flag("--pgm", infer.pgm, "Also write <id>.pgm previews");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Compute metrics for an infer output directory");
  e->add_option("--pred", eval.pred, "Directory written by infer")->required();
  e->add_option("--truth", eval.truth, "Manifest with labels and masks")->required();
  e->add_option("--fpr-limit", eval.fpr_limit, "PRO integration limit")->capture_default_str();

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic feature dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--n-normal", synth.n_normal)->capture_default_str();
  s->add_option("--n-anomalous", synth.n_anomalous)->capture_default_str();
  s->add_option("--seed", synth.seed, "RNG seed (fallback: CPR_SEED, then 0)");
  s->add_option("--grid", synth.grid, "Grid height and width")->expected(2)->capture_default_str();
  s->add_option("--dim", synth.dim, "Channels")->capture_default_str();

  BenchArgs bench;
  auto* m = app.add_subcommand("bench", "Measure per-stage inference latency");
  m->add_option("--model", bench.model, "Model bundle")->required();
  m->add_option("--query", bench.query, "Query manifest or CPRT files")->required();
  m->add_option("--iters", bench.iters)->capture_default_str();
  m->add_option("--warmup", bench.warmup)->capture_default_str();
  m->add_option("--threads", bench.threads)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kExitOk : kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "build") return run_build(build);
    if (name == "infer") return run_infer(infer);
    if (name == "eval") return run_eval(eval);
    if (name == "synth") return run_synth(synth);
    return run_bench(bench);
  } catch (const UsageError& err) {
    std::cerr << "cpr " << name << ": " << err.what() << '\n';
    return kExitUsage;
  } catch (const cpr::DataError& err) {
    std::cerr << "cpr " << name << ": " << err.what() << '\n';
    return kExitData;
  } catch (const std::exception& err) {
    std::cerr << "cpr " << name << ": " << err.what() << '\n';
    return kExitRuntime;
  }
}
