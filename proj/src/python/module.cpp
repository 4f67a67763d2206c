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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "gradsel/candidates.hpp"
#include "gradsel/dot_cache.hpp"
#include "gradsel/error.hpp"
#include "gradsel/gradient_file.hpp"
#include "gradsel/manifest.hpp"
#include "gradsel/projection.hpp"
#include "gradsel/selection.hpp"
#include "gradsel/similarity.hpp"
#include "gradsel/toy/benchmark.hpp"
#include "gradsel/toy/corpus.hpp"
#include "gradsel/toy/model.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace gradsel;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Records cross the boundary as (sample_id, [float32 arrays]) tuples.
GradientRecord to_record(const py::handle& obj) {
  auto t = obj.cast<py::tuple>();
  if (t.size() != 2) throw py::value_error("a record is a (sample_id, blocks) pair");
  GradientRecord r;
  r.sample_id = t[0].cast<std::int64_t>();
  for (const auto& b : t[1]) {
    auto arr = FloatArray::ensure(b);
    if (!arr) throw py::type_error("blocks must be convertible to float32 arrays");
    const float* p = arr.data();  // c_style guarantees contiguity
    r.blocks.emplace_back(p, p + arr.size());
  }
  return r;
}

py::tuple from_record(const GradientRecord& r) {
  py::list blocks;
  for (const auto& b : r.blocks) {
    FloatArray a(static_cast<py::ssize_t>(b.size()));
    std::copy(b.begin(), b.end(), a.mutable_data());
    blocks.append(std::move(a));
  }
  return py::make_tuple(r.sample_id, blocks);
}

py::dict from_set(const CandidateSet& s) {
  py::dict d;
  d["query_id"] = s.query_id;
  d["b"] = s.b;
  d["members"] = s.members;
  d["forced"] = s.forced;
  d["evicted"] = s.evicted ? py::object(py::int_(*s.evicted)) : py::object(py::none());
  return d;
}

// A path to a candidate-set file or a list of dicts shaped like from_set.
std::vector<CandidateSet> to_sets(const py::object& obj) {
  if (py::isinstance<py::str>(obj) || py::hasattr(obj, "__fspath__")) {
    return load_candidate_sets(obj.cast<fs::path>());
  }
  std::vector<CandidateSet> out;
  for (const auto& item : obj) {
    auto d = item.cast<py::dict>();
    CandidateSet s;
    s.query_id = d["query_id"].cast<std::int64_t>();
    s.members = d["members"].cast<std::vector<std::int64_t>>();
    s.b = d.contains("b") ? d["b"].cast<std::size_t>() : s.members.size();
    s.forced = d.contains("forced") && d["forced"].cast<bool>();
    if (d.contains("evicted") && !d["evicted"].is_none()) s.evicted = d["evicted"].cast<std::int64_t>();
    out.push_back(std::move(s));
  }
  return out;
}

ComponentSubset to_subset(const DotCache& cache, const ComponentManifest& manifest, const py::object& obj) {
  if (obj.is_none()) return all_components(cache.num_components());
  std::vector<std::size_t> idx;
  for (const auto& item : obj) {
    if (py::isinstance<py::str>(item)) {
      const auto id = parse_component_id(item.cast<std::string>());
      const auto k = id ? manifest.index_of(*id) : -1;
      if (k < 0) throw py::value_error("unknown component " + item.cast<std::string>());
      idx.push_back(static_cast<std::size_t>(k));
    } else {
      idx.push_back(item.cast<std::size_t>());
    }
  }
  return normalize_subset(idx, cache.num_components());
}

py::object parse_json(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

toy::BenchmarkConfig config_from_dict(const py::dict& d) {
  toy::BenchmarkConfig c;
  for (const auto& [key, value] : d) {
    const auto k = key.cast<std::string>();
    if (k == "n_samples") c.n_samples = value.cast<std::size_t>();
    else if (k == "b") c.b = value.cast<std::size_t>();
    else if (k == "seed") c.seed = value.cast<std::uint64_t>();
    else if (k == "train_steps") c.train_steps = value.cast<int>();
    else if (k == "learning_rate") c.learning_rate = value.cast<double>();
    else if (k == "batch_size") c.batch_size = value.cast<std::size_t>();
    else if (k == "perturb_fraction") c.perturb_fraction = value.cast<double>();
    else if (k == "projection_fractions") c.projection_fractions = value.cast<std::vector<double>>();
    else if (k == "noise_gradients") c.noise_gradients = value.cast<bool>();
    else if (k == "run_sweep") c.run_sweep = value.cast<bool>();
    else if (k == "run_alignment") c.run_alignment = value.cast<bool>();
    else if (k == "reuse_cache") c.reuse_cache = value.cast<bool>();
    else if (k == "threads") c.threads = value.cast<std::size_t>();
    else if (k == "work_dir") c.work_dir = value.cast<fs::path>();
    else if (k == "layers") c.model.layers = value.cast<int>();
    else if (k == "d_model") c.model.d_model = value.cast<int>();
    else if (k == "n_heads") c.model.n_heads = value.cast<int>();
    else if (k == "d_ff") c.model.d_ff = value.cast<int>();
    else if (k == "settings") {
      c.settings.clear();
      for (const auto& s : value) {
        const auto name = s.cast<std::string>();
        if (name == "paraphrased") c.settings.push_back(CorpusRole::kParaphrased);
        else if (name == "model_generated") c.settings.push_back(CorpusRole::kModelGenerated);
        else throw py::value_error("unknown setting " + name);
      }
    } else {
      throw py::key_error("unknown benchmark option " + k);
    }
  }
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Component-wise gradient similarity and greedy component selection";

  // Raised with a `code` attribute naming the library error code.
  static py::handle error_type = py::exception<Error>(m, "GradselError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::reinterpret_borrow<py::object>(error_type)(e.what());
      err.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error_type.ptr(), err.ptr());
    }
  });

  py::class_<ComponentManifest>(m, "ComponentManifest")
      .def_static("from_json", &ComponentManifest::from_json)
      .def_static("load", &ComponentManifest::load_json)
      .def_static(
          "from_shapes",
          [](const std::vector<std::pair<std::string, std::vector<std::int64_t>>>& shapes, const std::string& tag) {
            std::vector<std::pair<ComponentId, std::vector<std::int64_t>>> out;
            for (const auto& [name, shape] : shapes) {
              auto id = parse_component_id(name);
              if (!id) throw py::value_error("bad component id " + name);
              out.emplace_back(*id, shape);
            }
            return ComponentManifest::from_shapes(out, tag);
          },
          py::arg("shapes"), py::arg("model_tag") = "")
      .def("to_json", &ComponentManifest::to_json)
      .def("save", &ComponentManifest::save_json)
      .def("__len__", &ComponentManifest::size)
      .def_property_readonly("total_params", &ComponentManifest::total_params)
      .def_property_readonly("model_tag", &ComponentManifest::model_tag)
      .def_property_readonly("hash", &ComponentManifest::hash_hex)
      .def_property_readonly("components",
                             [](const ComponentManifest& mf) {
                               std::vector<std::string> names;
                               for (const auto& e : mf.entries()) names.push_back(to_string(e.id));
                               return names;
                             })
      .def_property_readonly("param_counts",
                             [](const ComponentManifest& mf) {
                               std::vector<std::int64_t> n;
                               for (const auto& e : mf.entries()) n.push_back(e.param_count);
                               return n;
                             })
      .def("shape", [](const ComponentManifest& mf, std::size_t k) { return mf.entries().at(k).shape; })
      .def("offset", &ComponentManifest::offset)
      .def("index_of",
           [](const ComponentManifest& mf, const std::string& name) {
             auto id = parse_component_id(name);
             return id ? mf.index_of(*id) : std::ptrdiff_t{-1};
           })
      .def("__eq__", [](const ComponentManifest& a, const ComponentManifest& b) { return a == b; });

  m.def(
      "write_gradient_file",
      [](const ComponentManifest& manifest, const py::iterable& records, const fs::path& path) {
        std::vector<GradientRecord> recs;
        for (const auto& r : records) recs.push_back(to_record(r));
        py::gil_scoped_release release;
        write_gradient_file(manifest, recs, path);
      },
      py::arg("manifest"), py::arg("records"), py::arg("path"));
  m.def(
      "read_gradient_file",
      [](const fs::path& path) {
        auto [manifest, recs] = read_gradient_file(path);
        py::list out;
        for (const auto& r : recs) out.append(from_record(r));
        return py::make_tuple(manifest, out);
      },
      py::arg("path"));
  m.def(
      "compute_pair_dots",
      [](const py::object& a, const py::object& b) { return compute_pair_dots(to_record(a), to_record(b)); },
      py::arg("query"), py::arg("candidate"));

  py::class_<DotCache>(m, "DotCache")
      .def_property_readonly("num_pairs", &DotCache::num_pairs)
      .def_property_readonly("num_components", &DotCache::num_components)
      .def_property_readonly("manifest_hash", [](const DotCache& c) { return hash_to_hex(c.manifest_hash()); })
      .def_property_readonly("pairs",
                             [](const DotCache& c) {
                               std::vector<std::pair<std::int64_t, std::int64_t>> out;
                               for (const auto& p : c.pairs()) out.emplace_back(p.query_id, p.cand_id);
                               return out;
                             })
      .def("pair_dots",
           [](const DotCache& c, std::int64_t q, std::int64_t j) {
             auto s = c.pair_dots(PairKey{q, j});
             return std::vector<double>(s.begin(), s.end());
           })
      .def("query_self",
           [](const DotCache& c, std::int64_t q) {
             auto s = c.query_self(q);
             return std::vector<double>(s.begin(), s.end());
           })
      .def("cand_self",
           [](const DotCache& c, std::int64_t j) {
             auto s = c.cand_self(j);
             return std::vector<double>(s.begin(), s.end());
           })
      .def("save", [](const DotCache& c, const fs::path& path) { save_cache(c, path); })
      .def("__eq__", [](const DotCache& a, const DotCache& b) { return a == b; });

  m.def(
      "build_cache",
      [](const fs::path& queries, const fs::path& candidates, const py::object& sets, std::size_t threads) {
        auto cs = to_sets(sets);
        py::gil_scoped_release release;
        return build_cache(queries, candidates, cs, {threads});
      },
      py::arg("queries"), py::arg("candidates"), py::arg("cand_sets"), py::arg("threads") = 0);
  m.def("load_cache", &load_cache, py::arg("path"), py::arg("manifest"));

  m.def(
      "reconstruct_cosine",
      [](const DotCache& cache, const ComponentManifest& manifest, std::int64_t q, std::int64_t j,
         const py::object& subset, double epsilon) {
        return reconstruct_cosine(cache, q, j, to_subset(cache, manifest, subset), {epsilon});
      },
      py::arg("cache"), py::arg("manifest"), py::arg("query_id"), py::arg("cand_id"), py::arg("subset") = py::none(),
      py::arg("epsilon") = 1e-12);
  m.def(
      "score_table",
      [](const DotCache& cache, const ComponentManifest& manifest, const py::object& sets, const py::object& subset) {
        auto t = score_table(cache, to_sets(sets), to_subset(cache, manifest, subset));
        py::dict out;
        for (std::size_t r = 0; r < t.size(); ++r) out[py::make_tuple(t.keys[r].query_id, t.keys[r].cand_id)] = t.scores[r];
        return out;
      },
      py::arg("cache"), py::arg("manifest"), py::arg("cand_sets"), py::arg("subset") = py::none());
  m.def(
      "evaluate_subset",
      [](const DotCache& cache, const ComponentManifest& manifest, const py::object& sets, const py::object& subset) {
        return evaluate_subset(cache, to_sets(sets), to_subset(cache, manifest, subset));
      },
      py::arg("cache"), py::arg("manifest"), py::arg("cand_sets"), py::arg("subset") = py::none());

  m.def("tokenize", &tokenize, py::arg("text"));
  m.def(
      "bm25_scores",
      [](const std::string& query, const std::vector<std::string>& docs, double k1, double b) {
        Corpus c;
        for (std::size_t i = 0; i < docs.size(); ++i) c.docs.push_back({static_cast<std::int64_t>(i), docs[i], ""});
        return bm25_scores(query, c, {k1, b});
      },
      py::arg("query"), py::arg("docs"), py::arg("k1") = 1.2, py::arg("b") = 0.75);
  m.def(
      "build_candidate_sets",
      [](const fs::path& queries, const fs::path& base, std::size_t b, double k1, double bm25_b, std::size_t threads) {
        std::vector<CandidateSet> sets;
        {
          py::gil_scoped_release release;
          sets = build_candidate_sets(read_corpus(queries, CorpusRole::kParaphrased), read_corpus(base, CorpusRole::kBase),
                                      b, {k1, bm25_b}, threads);
        }
        py::list out;
        for (const auto& s : sets) out.append(from_set(s));
        return out;
      },
      py::arg("queries"), py::arg("base"), py::arg("b") = 5, py::arg("k1") = 1.2, py::arg("bm25_b") = 0.75,
      py::arg("threads") = 0);
  m.def(
      "load_candidate_sets",
      [](const fs::path& path) {
        py::list out;
        for (const auto& s : load_candidate_sets(path)) out.append(from_set(s));
        return out;
      },
      py::arg("path"));
  m.def(
      "save_candidate_sets", [](const py::object& sets, const fs::path& path) { save_candidate_sets(to_sets(sets), path); },
      py::arg("cand_sets"), py::arg("path"));

  m.def(
      "single_component_sweep",
      [](const DotCache& cache, const ComponentManifest& manifest, const py::object& sets, const std::string& objective) {
        SelectionOptions opt;
        opt.objective = parse_objective(objective);
        const auto sweep = single_component_sweep(cache, manifest, to_sets(sets), opt);
        py::dict out;
        for (const auto& e : sweep.entries) out[py::str(to_string(e.component))] = e.value;
        return out;
      },
      py::arg("cache"), py::arg("manifest"), py::arg("cand_sets"), py::arg("objective") = "accuracy");
  m.def(
      "greedy_select",
      [](const DotCache& cache, const ComponentManifest& manifest, const py::object& sets, const std::string& objective,
         std::size_t max_components, double max_param_fraction, std::size_t threads) {
        SelectionOptions opt;
        opt.objective = parse_objective(objective);
        opt.threads = threads;
        auto cs = to_sets(sets);
        std::string text;
        {
          py::gil_scoped_release release;
          text = trace_to_json(greedy_select(cache, manifest, cs, opt, {max_components, max_param_fraction}));
        }
        return parse_json(text);
      },
      py::arg("cache"), py::arg("manifest"), py::arg("cand_sets"), py::arg("objective") = "accuracy",
      py::arg("max_components") = 0, py::arg("max_param_fraction") = 1.0, py::arg("threads") = 0);

  m.def("allocate_dims", &allocate_dims, py::arg("manifest"), py::arg("total_dim"));
  m.def(
      "project_gradient_file",
      [](const fs::path& input, const fs::path& output, std::optional<std::int64_t> total_dim,
         std::optional<double> fraction, std::uint64_t seed, const std::string& distribution, std::size_t threads) {
        const auto manifest = GradientFileReader(input).manifest();
        const auto dist = parse_distribution(distribution);
        if (total_dim.has_value() == fraction.has_value()) throw py::value_error("give exactly one of total_dim, fraction");
        const auto cfg = total_dim ? ProjectionConfig::make(manifest, *total_dim, seed, dist)
                                   : ProjectionConfig::from_fraction(manifest, *fraction, seed, dist);
        {
          py::gil_scoped_release release;
          project_gradient_file(input, cfg, output, threads);
        }
        return parse_json(cfg.to_json());
      },
      py::arg("input"), py::arg("output"), py::arg("total_dim") = py::none(), py::arg("fraction") = py::none(),
      py::arg("seed") = 0, py::arg("distribution") = "rademacher", py::arg("threads") = 0);
  m.def(
      "read_projected_file",
      [](const fs::path& path) {
        const auto set = read_projected_file(path);
        py::list recs;
        for (const auto& r : set.records) {
          FloatArray a(static_cast<py::ssize_t>(r.vector.size()));
          std::copy(r.vector.begin(), r.vector.end(), a.mutable_data());
          recs.append(py::make_tuple(r.sample_id, a));
        }
        return py::make_tuple(parse_json(set.config.to_json()), recs);
      },
      py::arg("path"));
  m.def(
      "projected_accuracy",
      [](const fs::path& queries, const fs::path& candidates, const py::object& sets) {
        auto cs = to_sets(sets);
        return retrieval_accuracy(projected_score_table(read_projected_file(queries), read_projected_file(candidates), cs),
                                  cs);
      },
      py::arg("queries"), py::arg("candidates"), py::arg("cand_sets"));

  auto toy = m.def_submodule("toy", "Micro-transformer benchmark");
  toy.def(
      "run_benchmark",
      [](const py::dict& options) {
        const auto config = config_from_dict(options);
        std::vector<BenchmarkReport> reports;
        {
          py::gil_scoped_release release;
          reports = toy::run_benchmark(config);
        }
        py::list out;
        for (const auto& r : reports) out.append(parse_json(r.to_json()));
        return out;
      },
      py::arg("options"));
  toy.def(
      "check_gradients",
      [](const fs::path& model_path, const fs::path& corpus, std::size_t index, std::size_t coords, std::uint64_t seed) {
        const auto model = toy::MicroModel::load(model_path);
        const auto samples = toy::from_corpus(read_corpus(corpus, CorpusRole::kBase));
        if (index >= samples.size()) throw py::index_error("sample index out of range");
        const auto r = toy::check_gradients(model, samples[index], coords, seed);
        py::dict out;
        out["max_rel_error"] = r.overall_max;
        out["coordinates"] = r.coordinates_checked;
        out["per_component"] = r.max_rel_error;
        return out;
      },
      py::arg("model"), py::arg("corpus"), py::arg("index") = 0, py::arg("coords") = 64, py::arg("seed") = 0);
  toy.def(
      "generate_corpus",
      [](std::size_t n, std::uint64_t seed, const fs::path& out) {
        write_corpus(toy::to_corpus(toy::generate_toy_corpus({n, seed}), CorpusRole::kBase), out);
      },
      py::arg("n_samples"), py::arg("seed"), py::arg("path"));
}
