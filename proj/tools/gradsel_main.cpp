// Copyright 2026 The gradsel Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// gradsel command-line tool. Every stage reads and writes files only.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradsel/candidates.hpp"
#include "gradsel/dot_cache.hpp"
#include "gradsel/error.hpp"
#include "gradsel/evaluation.hpp"
#include "gradsel/gradient_file.hpp"
#include "gradsel/parallel.hpp"
#include "gradsel/plot.hpp"
#include "gradsel/projection.hpp"
#include "gradsel/selection.hpp"
#include "gradsel/similarity.hpp"
#include "gradsel/toy/benchmark.hpp"
#include "gradsel/toy/corpus.hpp"
#include "gradsel/toy/model.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace gradsel;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised for bad flag values or missing inputs before any stage runs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const json& j) { std::cout << j.dump() << std::endl; }

void log_line(const std::string& msg) {
  json j;
  j["event"] = "log";
  j["message"] = msg;
  std::cerr << j.dump() << std::endl;
}

void print_config(const std::string& command, json config) {
  json j;
  j["event"] = "config";
  j["command"] = command;
  j["config"] = std::move(config);
  emit(j);
}

void require_file(const fs::path& p, const std::string& flag) {
  if (p.empty()) throw UsageError(flag + " is required");
  if (!fs::is_regular_file(p)) throw UsageError(flag + ": no such file: " + p.string());
}

void require_parent(const fs::path& p, const std::string& flag) {
  if (p.empty()) throw UsageError(flag + " is required");
  const auto parent = p.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw UsageError(flag + ": directory does not exist: " + parent.string());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + p.string());
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorCode::kIo, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::size_t> parse_components(const std::string& list, const ComponentManifest& manifest) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto id = parse_component_id(item);
    if (!id) throw UsageError("malformed component id '" + item + "'");
    const auto idx = manifest.index_of(*id);
    if (idx < 0) throw UsageError("component " + item + " is not in the manifest");
    out.push_back(static_cast<std::size_t>(idx));
  }
  if (out.empty()) throw UsageError("--components lists no components");
  return out;
}

CorpusRole parse_role(const std::string& s) {
  if (s == "paraphrased") return CorpusRole::kParaphrased;
  if (s == "model_generated") return CorpusRole::kModelGenerated;
  throw UsageError("unknown setting '" + s + "'");
}

// Flags shared by toygen and bench.
struct PipelineFlags {
  toy::BenchmarkConfig config;
  std::vector<std::string> settings = {"paraphrased", "model_generated"};

  void add(CLI::App* app) {
    app->add_option("--n", config.n_samples, "Number of base samples")->capture_default_str();
    app->add_option("--seed", config.seed, "Master seed")->capture_default_str();
    app->add_option("--train-steps", config.train_steps, "Adam steps")->capture_default_str();
    app->add_option("--lr", config.learning_rate, "Learning rate")->capture_default_str();
    app->add_option("--batch", config.batch_size, "Mini-batch size")->capture_default_str();
    app->add_option("--perturb-frac", config.perturb_fraction, "Fraction of tokens swapped to synonyms")
        ->capture_default_str();
    app->add_option("--layers", config.model.layers, "Transformer layers")->capture_default_str();
    app->add_option("--d-model", config.model.d_model, "Model width")->capture_default_str();
    app->add_option("--heads", config.model.n_heads, "Attention heads")->capture_default_str();
    app->add_option("--d-ff", config.model.d_ff, "Gated MLP width")->capture_default_str();
    app->add_option("--settings", settings, "Query settings: paraphrased, model_generated")->capture_default_str();
  }

  void resolve(const fs::path& dir, std::size_t threads) {
    config.work_dir = dir;
    config.threads = threads;
    config.settings.clear();
    for (const auto& s : settings) config.settings.push_back(parse_role(s));
    try {
      config.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
};

// ---------------------------------------------------------------------------

int cmd_toygen(PipelineFlags& flags, const fs::path& out, std::size_t threads) {
  if (out.empty()) throw UsageError("--out is required");
  flags.resolve(out, threads);
  print_config("toygen", flags.config.to_json());
  fs::create_directories(out);
  const auto cfg = flags.config;
  toy::write_base_corpus(cfg, out / "corpus_base.jsonl");
  const auto summary = toy::train_checkpoint(cfg, out / "corpus_base.jsonl", out / "model.gsm");
  log_line("trained model: loss " + std::to_string(summary.loss_initial) + " -> " +
           std::to_string(summary.loss_final));
  const auto model = toy::MicroModel::load(out / "model.gsm");
  model.manifest().save_json(out / "manifest.json");
  json files = json::array({(out / "corpus_base.jsonl").string()});
  for (auto role : cfg.settings) {
    const auto path = out / ("corpus_" + std::string(role_name(role)) + ".jsonl");
    toy::write_query_corpus(cfg, role, &model, out / "corpus_base.jsonl", path);
    files.push_back(path.string());
  }
  json r;
  r["event"] = "result";
  r["corpora"] = files;
  r["model"] = (out / "model.gsm").string();
  r["train_loss_initial"] = summary.loss_initial;
  r["train_loss_final"] = summary.loss_final;
  emit(r);
  return 0;
}

struct GradsFlags {
  fs::path model;
  std::vector<fs::path> corpora;
  fs::path out_dir;
  std::optional<std::uint64_t> noise_seed;
  bool check = false;
  std::size_t check_coords = 64;
  double check_floor = 1e-6;
};

int cmd_grads(const GradsFlags& f, std::size_t threads) {
  require_file(f.model, "--model");
  if (f.corpora.empty()) throw UsageError("--corpus is required");
  for (const auto& c : f.corpora) require_file(c, "--corpus");
  if (f.out_dir.empty()) throw UsageError("--out-dir is required");
  json cfg;
  cfg["model"] = f.model.string();
  cfg["corpora"] = json::array();
  for (const auto& c : f.corpora) cfg["corpora"].push_back(c.string());
  cfg["out_dir"] = f.out_dir.string();
  cfg["noise_seed"] = f.noise_seed ? json(*f.noise_seed) : json(nullptr);
  cfg["check_grads"] = f.check;
  cfg["check_coords"] = f.check_coords;
  cfg["check_floor"] = f.check_floor;
  cfg["threads"] = resolve_threads(threads);
  print_config("grads", cfg);

  const auto model = toy::MicroModel::load(f.model);
  fs::create_directories(f.out_dir);
  model.manifest().save_json(f.out_dir / "manifest.json");
  json r;
  r["event"] = "result";
  r["gradient_files"] = json::array();
  for (const auto& c : f.corpora) {
    std::string stem = c.stem().string();
    if (stem.rfind("corpus_", 0) == 0) stem = stem.substr(7);
    const auto out = f.out_dir / ("grads_" + stem + ".gsg");
    toy::extract_gradients(c, model.manifest(), f.noise_seed ? nullptr : &model, f.noise_seed.value_or(0), out,
                           threads);
    r["gradient_files"].push_back(out.string());
  }
  int rc = 0;
  if (f.check) {
    const auto samples = toy::from_corpus(read_corpus(f.corpora.front(), CorpusRole::kBase));
    const auto res = toy::check_gradients(model, samples.front(), f.check_coords, 0, f.check_floor);
    json per;
    for (std::size_t k = 0; k < res.max_rel_error.size(); ++k) {
      per[to_string(model.manifest()[k].id)] = res.max_rel_error[k];
    }
    r["check_grads"] = {{"max_rel_error", res.overall_max},
                        {"coordinates", res.coordinates_checked},
                        {"per_component", per},
                        {"pass", res.overall_max < 1e-4}};
    std::cerr << "max relative error " << res.overall_max << " over " << res.coordinates_checked
              << " coordinates\n";
    if (!(res.overall_max < 1e-4)) rc = kExitRuntime;
  }
  emit(r);
  return rc;
}

struct CandsFlags {
  fs::path queries, base, out;
  std::size_t b = 5;
  double k1 = 1.2, bm25_b = 0.75;
  std::string setting = "paraphrased";
};

int cmd_cands(const CandsFlags& f, std::size_t threads) {
  require_file(f.queries, "--queries");
  require_file(f.base, "--base");
  require_parent(f.out, "--out");
  if (f.b == 0) throw UsageError("--b must be positive");
  json cfg = {{"queries", f.queries.string()}, {"base", f.base.string()}, {"out", f.out.string()},
              {"b", f.b},  {"k1", f.k1},     {"bm25_b", f.bm25_b},       {"threads", resolve_threads(threads)}};
  print_config("cands", cfg);
  const auto q = read_corpus(f.queries, parse_role(f.setting));
  const auto base = read_corpus(f.base, CorpusRole::kBase);
  if (f.b > base.size()) throw UsageError("--b exceeds the base corpus size");
  const auto sets = build_candidate_sets(q, base, f.b, {f.k1, f.bm25_b}, threads);
  save_candidate_sets(sets, f.out);
  std::size_t forced = 0;
  for (const auto& s : sets) forced += s.forced ? 1 : 0;
  emit({{"event", "result"}, {"cand_sets", f.out.string()}, {"queries", sets.size()}, {"forced", forced}});
  return 0;
}

struct DotsFlags {
  fs::path queries, cands, cand_sets, out;
};

int cmd_dots(const DotsFlags& f, std::size_t threads) {
  require_file(f.queries, "--queries");
  require_file(f.cands, "--cands");
  require_file(f.cand_sets, "--cand-sets");
  require_parent(f.out, "--out");
  print_config("dots", {{"queries", f.queries.string()},
                        {"cands", f.cands.string()},
                        {"cand_sets", f.cand_sets.string()},
                        {"out", f.out.string()},
                        {"threads", resolve_threads(threads)}});
  const auto sets = load_candidate_sets(f.cand_sets);
  const auto cache = build_cache(f.queries, f.cands, sets, {threads});
  save_cache(cache, f.out);
  emit({{"event", "result"},
        {"cache", f.out.string()},
        {"pairs", cache.num_pairs()},
        {"components", cache.num_components()},
        {"manifest_hash", hash_to_hex(cache.manifest_hash())}});
  return 0;
}

struct GreedyFlags {
  fs::path cache, manifest, cand_sets, out, json_out, sweep_out;
  std::string objective = "accuracy";
  std::size_t max_components = 0;
  double max_param_frac = 1.0;
};

int cmd_greedy(const GreedyFlags& f, std::size_t threads) {
  require_file(f.cache, "--cache");
  require_file(f.manifest, "--manifest");
  require_file(f.cand_sets, "--cand-sets");
  require_parent(f.out, "--out");
  Objective objective;
  try {
    objective = parse_objective(f.objective);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (!(f.max_param_frac > 0.0 && f.max_param_frac <= 1.0)) throw UsageError("--max-param-frac must be in (0, 1]");
  print_config("greedy", {{"cache", f.cache.string()},
                          {"manifest", f.manifest.string()},
                          {"cand_sets", f.cand_sets.string()},
                          {"objective", f.objective},
                          {"max_components", f.max_components},
                          {"max_param_frac", f.max_param_frac},
                          {"out", f.out.string()},
                          {"threads", resolve_threads(threads)}});
  const auto manifest = ComponentManifest::load_json(f.manifest);
  const auto cache = load_cache(f.cache, manifest);
  const auto sets = load_candidate_sets(f.cand_sets);
  SelectionOptions opts;
  opts.objective = objective;
  opts.threads = threads;
  const auto trace = greedy_select(cache, manifest, sets, opts, {f.max_components, f.max_param_frac});
  write_trace_csv(trace, f.out);
  if (!f.json_out.empty()) write_text(f.json_out, trace_to_json(trace) + "\n");
  if (!f.sweep_out.empty()) write_sweep_csv(single_component_sweep(cache, manifest, sets, opts), f.sweep_out);
  json r = {{"event", "result"}, {"trace", f.out.string()}, {"steps", trace.steps.size()}};
  if (!trace.steps.empty()) {
    r["first"] = to_string(trace.steps.front().component);
    r["best_prefix_length"] = trace.best_prefix_length();
    r["best_prefix_value"] = trace.best_prefix_value();
  }
  emit(r);
  return 0;
}

struct ProjectFlags {
  fs::path grads, out;
  std::optional<double> dim_frac;
  std::optional<std::int64_t> dim;
  std::uint64_t seed = 0;
  std::string distribution = "rademacher";
};

int cmd_project(const ProjectFlags& f, std::size_t threads) {
  require_file(f.grads, "--grads");
  require_parent(f.out, "--out");
  if (f.dim_frac.has_value() == f.dim.has_value()) throw UsageError("give exactly one of --dim-frac and --dim");
  if (f.dim_frac && !(*f.dim_frac > 0.0 && *f.dim_frac <= 1.0)) throw UsageError("--dim-frac must be in (0, 1]");
  ProjectionDistribution dist;
  try {
    dist = parse_distribution(f.distribution);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  GradientFileReader reader(f.grads);
  const auto& manifest = reader.manifest();
  if (f.dim && (*f.dim < static_cast<std::int64_t>(manifest.size()))) {
    throw UsageError("--dim must be at least the number of components");
  }
  const auto config = f.dim_frac ? ProjectionConfig::from_fraction(manifest, *f.dim_frac, f.seed, dist)
                                 : ProjectionConfig::make(manifest, *f.dim, f.seed, dist);
  print_config("project", {{"grads", f.grads.string()},
                           {"out", f.out.string()},
                           {"projection", json::parse(config.to_json())},
                           {"threads", resolve_threads(threads)}});
  project_gradient_file(f.grads, config, f.out, threads);
  emit({{"event", "result"}, {"projected", f.out.string()}, {"total_dim", config.total_dim}});
  return 0;
}

struct EvalFlags {
  std::string surrogate = "full";
  fs::path cache, manifest, cand_sets, proj_queries, proj_cands, scores_out, sweep_out;
  std::string components;
};

int cmd_eval(const EvalFlags& f, std::size_t threads) {
  require_file(f.cand_sets, "--cand-sets");
  const auto sets = load_candidate_sets(f.cand_sets);
  json cfg = {{"surrogate", f.surrogate}, {"cand_sets", f.cand_sets.string()}, {"threads", resolve_threads(threads)}};
  ScoreTable table;
  json r = {{"event", "result"}, {"surrogate", f.surrogate}};
  if (f.surrogate == "projection") {
    require_file(f.proj_queries, "--proj-queries");
    require_file(f.proj_cands, "--proj-cands");
    cfg["proj_queries"] = f.proj_queries.string();
    cfg["proj_cands"] = f.proj_cands.string();
    print_config("eval", cfg);
    table = projected_score_table(read_projected_file(f.proj_queries), read_projected_file(f.proj_cands), sets);
  } else if (f.surrogate == "full" || f.surrogate == "subset" || f.surrogate == "sweep") {
    require_file(f.cache, "--cache");
    require_file(f.manifest, "--manifest");
    const auto manifest = ComponentManifest::load_json(f.manifest);
    std::vector<std::size_t> subset;
    if (f.surrogate == "subset") {
      subset = parse_components(f.components, manifest);
    } else {
      subset = all_components(manifest.size());
    }
    cfg["cache"] = f.cache.string();
    cfg["manifest"] = f.manifest.string();
    if (f.surrogate == "subset") cfg["components"] = f.components;
    print_config("eval", cfg);
    const auto cache = load_cache(f.cache, manifest);
    table = score_table(cache, sets, subset);
    if (f.surrogate == "sweep") {
      SelectionOptions opts;
      opts.threads = threads;
      const auto sweep = single_component_sweep(cache, manifest, sets, opts);
      if (!f.sweep_out.empty()) write_sweep_csv(sweep, f.sweep_out);
      json per;
      for (const auto& e : sweep.entries) per[to_string(e.component)] = e.value;
      r["per_component"] = per;
      json kinds;
      for (const auto& [k, v] : sweep.per_kind) kinds[std::string(kind_name(k))] = v;
      r["per_kind"] = kinds;
    }
  } else {
    throw UsageError("--surrogate must be full, subset, sweep or projection");
  }
  if (!f.scores_out.empty()) write_score_csv(table, f.scores_out);
  r["accuracy"] = retrieval_accuracy(table, sets);
  r["queries"] = sets.size();
  emit(r);
  return 0;
}

// ---------------------------------------------------------------------------
// report: CSV tables and SVG figures from a benchmark work directory.

int cmd_report(const fs::path& work_dir, const fs::path& out_dir) {
  if (work_dir.empty() || !fs::is_directory(work_dir)) throw UsageError("--work-dir must be an existing directory");
  const fs::path out = out_dir.empty() ? work_dir / "report" : out_dir;
  print_config("report", {{"work_dir", work_dir.string()}, {"out_dir", out.string()}});
  std::vector<std::string> settings;
  for (const char* s : {"paraphrased", "model_generated"}) {
    if (fs::exists(work_dir / ("report_" + std::string(s) + ".json"))) settings.emplace_back(s);
  }
  if (settings.empty()) throw UsageError("no report_<setting>.json files in " + work_dir.string());
  fs::create_directories(out);

  std::ofstream cost(out / "cost.csv");
  cost << "setting,stage,seconds,cached\n";
  std::ofstream summary(out / "summary.csv");
  summary << "setting,full_accuracy,best_greedy_accuracy,best_prefix_length,best_prefix_param_fraction,"
             "greedy_seconds,precompute_seconds,greedy_over_precompute\n";
  json files = json::array();
  for (const auto& name : settings) {
    const auto rep = json::parse(read_text(work_dir / ("report_" + name + ".json")));
    const double full = rep.at("full_accuracy").get<double>();
    std::map<std::string, double> timings;
    for (const auto& [stage, secs] : rep.at("timings").items()) {
      timings[stage] = secs.get<double>();
      cost << name << "," << stage << "," << secs.get<double>() << "," << (rep.at("cached").get<bool>() ? 1 : 0)
           << "\n";
    }
    const auto trace = trace_from_json(rep.at("trace").dump());
    const auto best_len = trace.best_prefix_length();
    const double best_frac = best_len ? trace.steps[best_len - 1].cumulative_param_fraction : 0.0;
    summary << name << "," << full << "," << trace.best_prefix_value() << "," << best_len << "," << best_frac << ","
            << timings["greedy"] << "," << timings["precompute"] << ","
            << (timings["precompute"] > 0 ? timings["greedy"] / timings["precompute"] : 0.0) << "\n";

    // Curves: greedy accuracy and random projection vs parameter fraction.
    std::vector<CurvePoint> rp_acc, rp_align;
    for (const auto& p : rep.at("projections")) {
      rp_acc.push_back({p.at("param_fraction").get<double>(), p.at("accuracy").get<double>()});
      rp_align.push_back({p.at("param_fraction").get<double>(), p.at("alignment").get<double>()});
    }
    const auto bundle = compare_curves({trace}, rp_acc, full);
    write_text(out / ("curves_accuracy_" + name + ".json"), bundle.to_json() + "\n");
    plot::LineChart acc_chart{"Retrieval accuracy vs parameter fraction (" + name + ")",
                              "fraction of parameters (log)", "accuracy", {}, {{"full gradient", full}}, true};
    for (const auto& s : bundle.series) acc_chart.series.push_back({s.name, s.x, s.y});
    write_text(out / ("fig_curve_accuracy_" + name + ".svg"), plot::render_svg(acc_chart));
    files.push_back((out / ("fig_curve_accuracy_" + name + ".svg")).string());

    if (rep.contains("alignment_trace")) {
      const auto atrace = trace_from_json(rep.at("alignment_trace").dump());
      const auto abundle = compare_curves({atrace}, rp_align, 1.0);
      write_text(out / ("curves_alignment_" + name + ".json"), abundle.to_json() + "\n");
      plot::LineChart al_chart{"Alignment with full-gradient scores (" + name + ")",
                               "fraction of parameters (log)", "cosine alignment", {}, {{"full gradient", 1.0}}, true};
      for (const auto& s : abundle.series) al_chart.series.push_back({s.name, s.x, s.y});
      write_text(out / ("fig_curve_alignment_" + name + ".svg"), plot::render_svg(al_chart));
      files.push_back((out / ("fig_curve_alignment_" + name + ".svg")).string());
    }

    const fs::path sweep_csv = work_dir / ("sweep_" + name + ".csv");
    if (fs::exists(sweep_csv)) {
      const auto sweep = read_sweep_csv(sweep_csv);
      const auto means = per_kind_means(sweep);
      write_per_kind_csv(means, out / ("per_kind_" + name + ".csv"));
      const auto depth = depth_profile(sweep);
      write_depth_csv(depth, out / ("depth_" + name + ".csv"));

      plot::BoxChart box{"Single-component accuracy by kind (" + name + ")", "accuracy", {}};
      for (auto kind : kAllKinds) {
        plot::BoxGroup g{std::string(kind_name(kind)), {}};
        for (const auto& [id, v] : sweep) {
          if (id.kind == kind) g.values.push_back(v);
        }
        if (!g.values.empty()) box.groups.push_back(std::move(g));
      }
      write_text(out / ("fig_box_" + name + ".svg"), plot::render_svg(box));
      files.push_back((out / ("fig_box_" + name + ".svg")).string());

      plot::LineChart depth_chart{"Accuracy vs layer depth (" + name + ")", "layer", "accuracy", {}, {}, false};
      for (auto kind : kLayerKinds) {
        plot::Series s{std::string(kind_name(kind)), {}, {}};
        for (int layer : depth.layers) {
          s.x.push_back(layer);
          s.y.push_back(depth.at(layer, kind));
        }
        depth_chart.series.push_back(std::move(s));
      }
      write_text(out / ("fig_depth_" + name + ".svg"), plot::render_svg(depth_chart));
      files.push_back((out / ("fig_depth_" + name + ".svg")).string());
    }
  }
  emit({{"event", "result"}, {"out_dir", out.string()}, {"figures", files}});
  return 0;
}

int cmd_bench(PipelineFlags& flags, const fs::path& work_dir, std::size_t threads, bool noise,
              const std::vector<double>& fractions, bool reuse_cache) {
  if (work_dir.empty()) throw UsageError("--work-dir is required");
  flags.config.noise_gradients = noise;
  flags.config.projection_fractions = fractions;
  flags.config.reuse_cache = reuse_cache;
  flags.resolve(work_dir, threads);
  print_config("bench", flags.config.to_json());
  const auto reports = toy::run_benchmark(flags.config, log_line);
  for (const auto& rep : reports) {
    json r;
    r["event"] = "result";
    r["setting"] = role_name(rep.setting);
    r["full_accuracy"] = rep.full_accuracy;
    if (rep.trace) {
      r["best_greedy_accuracy"] = rep.trace->best_prefix_value();
      r["best_prefix_length"] = rep.trace->best_prefix_length();
    }
    r["greedy_seconds"] = rep.timing("greedy");
    r["precompute_seconds"] = rep.timing("precompute");
    emit(r);
  }
  return 0;
}

std::size_t default_threads() {
  if (const char* env = std::getenv("GRADSEL_THREADS")) {
    try {
      return static_cast<std::size_t>(std::stoul(env));
    } catch (const std::exception&) {
      return 0;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradsel: gradient component selection and projection for instance attribution"};
  app.require_subcommand(1);
  std::size_t threads = default_threads();
  app.add_option("--threads", threads, "Worker threads (0 = GRADSEL_THREADS or all cores)")->capture_default_str();
  std::function<int()> run;

  PipelineFlags toygen_flags;
  fs::path toygen_out;
  auto* toygen = app.add_subcommand("toygen", "Generate the toy corpus, train the model, write D, D_p and D_m");
  toygen_flags.add(toygen);
  toygen->add_option("--out", toygen_out, "Output directory")->required();
  toygen->callback([&] { run = [&] { return cmd_toygen(toygen_flags, toygen_out, threads); }; });

  GradsFlags grads_flags;
  auto* grads = app.add_subcommand("grads", "Extract per-sample gradients for one or more corpora");
  grads->add_option("--model", grads_flags.model, "Model checkpoint")->required();
  grads->add_option("--corpus", grads_flags.corpora, "Corpus JSONL (repeatable)")->required();
  grads->add_option("--out-dir", grads_flags.out_dir, "Output directory")->required();
  grads->add_option("--noise-seed", grads_flags.noise_seed, "Write seeded iid noise instead of gradients");
  grads->add_flag("--check-grads", grads_flags.check, "Run the finite-difference check on the first sample");
  grads->add_option("--check-coords", grads_flags.check_coords, "Coordinates per component")->capture_default_str();
  grads->add_option("--check-floor", grads_flags.check_floor, "Relative-error denominator floor")
      ->capture_default_str();
  grads->callback([&] { run = [&] { return cmd_grads(grads_flags, threads); }; });

  CandsFlags cands_flags;
  auto* cands = app.add_subcommand("cands", "Build BM25 candidate sets");
  cands->add_option("--queries", cands_flags.queries, "Query corpus JSONL")->required();
  cands->add_option("--base", cands_flags.base, "Base corpus JSONL")->required();
  cands->add_option("--out", cands_flags.out, "Output JSON")->required();
  cands->add_option("--b", cands_flags.b, "Candidate set size")->capture_default_str();
  cands->add_option("--k1", cands_flags.k1, "BM25 k1")->capture_default_str();
  cands->add_option("--bm25-b", cands_flags.bm25_b, "BM25 length normalization")->capture_default_str();
  cands->add_option("--setting", cands_flags.setting, "Query setting label")->capture_default_str();
  cands->callback([&] { run = [&] { return cmd_cands(cands_flags, threads); }; });

  DotsFlags dots_flags;
  auto* dots = app.add_subcommand("dots", "Precompute per-component dot products");
  dots->add_option("--queries", dots_flags.queries, "Query gradient file")->required();
  dots->add_option("--cands", dots_flags.cands, "Candidate gradient file")->required();
  dots->add_option("--cand-sets", dots_flags.cand_sets, "Candidate sets JSON")->required();
  dots->add_option("--out", dots_flags.out, "Output cache")->required();
  dots->callback([&] { run = [&] { return cmd_dots(dots_flags, threads); }; });

  GreedyFlags greedy_flags;
  auto* greedy = app.add_subcommand("greedy", "Greedy component selection over a dot cache");
  greedy->add_option("--cache", greedy_flags.cache, "Dot cache")->required();
  greedy->add_option("--manifest", greedy_flags.manifest, "Manifest JSON")->required();
  greedy->add_option("--cand-sets", greedy_flags.cand_sets, "Candidate sets JSON")->required();
  greedy->add_option("--objective", greedy_flags.objective, "accuracy or alignment")->capture_default_str();
  greedy->add_option("--max-components", greedy_flags.max_components, "0 = no limit")->capture_default_str();
  greedy->add_option("--max-param-frac", greedy_flags.max_param_frac, "Parameter budget")->capture_default_str();
  greedy->add_option("--out", greedy_flags.out, "Trace CSV")->required();
  greedy->add_option("--json-out", greedy_flags.json_out, "Trace JSON");
  greedy->add_option("--sweep-out", greedy_flags.sweep_out, "Single-component sweep CSV");
  greedy->callback([&] { run = [&] { return cmd_greedy(greedy_flags, threads); }; });

  ProjectFlags project_flags;
  auto* project = app.add_subcommand("project", "Component-wise random projection of a gradient file");
  project->add_option("--grads", project_flags.grads, "Gradient file")->required();
  project->add_option("--out", project_flags.out, "Projected file")->required();
  project->add_option("--dim-frac", project_flags.dim_frac, "Output size as a fraction of parameters");
  project->add_option("--dim", project_flags.dim, "Output size");
  project->add_option("--seed", project_flags.seed, "Projection seed")->capture_default_str();
  project->add_option("--distribution", project_flags.distribution, "rademacher or gaussian")->capture_default_str();
  project->callback([&] { run = [&] { return cmd_project(project_flags, threads); }; });

  EvalFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "Retrieval accuracy of a surrogate");
  eval->add_option("--surrogate", eval_flags.surrogate, "full, subset, sweep or projection")->capture_default_str();
  eval->add_option("--cache", eval_flags.cache, "Dot cache");
  eval->add_option("--manifest", eval_flags.manifest, "Manifest JSON");
  eval->add_option("--cand-sets", eval_flags.cand_sets, "Candidate sets JSON")->required();
  eval->add_option("--components", eval_flags.components, "Comma-separated ids, e.g. embedding,L0.attn_q");
  eval->add_option("--proj-queries", eval_flags.proj_queries, "Projected query file");
  eval->add_option("--proj-cands", eval_flags.proj_cands, "Projected candidate file");
  eval->add_option("--scores-out", eval_flags.scores_out, "Score CSV");
  eval->add_option("--sweep-out", eval_flags.sweep_out, "Sweep CSV (surrogate sweep)");
  eval->callback([&] { run = [&] { return cmd_eval(eval_flags, threads); }; });

  fs::path report_work, report_out;
  auto* report = app.add_subcommand("report", "CSV tables and SVG figures from a benchmark directory");
  report->add_option("--work-dir", report_work, "Benchmark work directory")->required();
  report->add_option("--out-dir", report_out, "Output directory (default <work-dir>/report)");
  report->callback([&] { run = [&] { return cmd_report(report_work, report_out); }; });

  PipelineFlags bench_flags;
  fs::path bench_work;
  bool bench_noise = false, bench_reuse = false;
  std::vector<double> bench_fractions = toy::BenchmarkConfig{}.projection_fractions;
  auto* bench = app.add_subcommand("bench", "Run the whole toy benchmark");
  bench_flags.add(bench);
  bench->add_option("--work-dir", bench_work, "Work directory")->required();
  bench->add_flag("--noise", bench_noise, "Replace gradients with seeded iid noise");
  bench->add_flag("--reuse-cache", bench_reuse, "Reuse dot caches found in the work directory");
  bench->add_option("--proj-fracs", bench_fractions, "Random projection fractions")->capture_default_str();
  bench->callback([&] {
    run = [&] { return cmd_bench(bench_flags, bench_work, threads, bench_noise, bench_fractions, bench_reuse); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  try {
    return run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
