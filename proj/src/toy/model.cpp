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

#include "gradsel/toy/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "../binary_io.hpp"
#include "gradsel/error.hpp"
#include "gradsel/parallel.hpp"
#include "gradsel/toy/rng.hpp"

namespace gradsel::toy {
namespace {

constexpr double kRmsEps = 1e-6;
constexpr double kEmbeddingStd = 0.1;
constexpr double kPositionScale = 0.1;
constexpr std::array<char, 4> kCheckpointMagic = {'G', 'S', 'M', '1'};

// Y[T x out] = X[T x in] * W^T, W is [out x in].
void linear(const double* X, int T, int in, const double* W, int out, double* Y) {
  for (int t = 0; t < T; ++t) {
    const double* x = X + static_cast<std::ptrdiff_t>(t) * in;
    double* y = Y + static_cast<std::ptrdiff_t>(t) * out;
    for (int o = 0; o < out; ++o) {
      const double* w = W + static_cast<std::ptrdiff_t>(o) * in;
      double s = 0.0;
      for (int i = 0; i < in; ++i) s += w[i] * x[i];
      y[o] = s;
    }
  }
}

// Accumulates dX += dY W and dW += dY^T X.
void linear_back(const double* X, int T, int in, const double* W, int out, const double* dY, double* dX,
                 double* dW) {
  for (int t = 0; t < T; ++t) {
    const double* x = X + static_cast<std::ptrdiff_t>(t) * in;
    const double* dy = dY + static_cast<std::ptrdiff_t>(t) * out;
    double* dx = dX + static_cast<std::ptrdiff_t>(t) * in;
    for (int o = 0; o < out; ++o) {
      const double g = dy[o];
      if (g == 0.0) continue;
      const double* w = W + static_cast<std::ptrdiff_t>(o) * in;
      double* dw = dW + static_cast<std::ptrdiff_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        dx[i] += g * w[i];
        dw[i] += g * x[i];
      }
    }
  }
}

void rms_forward(const double* X, int T, int n, double* Y, double* r) {
  for (int t = 0; t < T; ++t) {
    const double* x = X + static_cast<std::ptrdiff_t>(t) * n;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) ss += x[i] * x[i];
    const double inv = 1.0 / std::sqrt(ss / n + kRmsEps);
    r[t] = inv;
    double* y = Y + static_cast<std::ptrdiff_t>(t) * n;
    for (int i = 0; i < n; ++i) y[i] = x[i] * inv;
  }
}

// dX += r dY - (r^3 / n) x (x . dY)
void rms_backward(const double* X, const double* r, int T, int n, const double* dY, double* dX) {
  for (int t = 0; t < T; ++t) {
    const double* x = X + static_cast<std::ptrdiff_t>(t) * n;
    const double* dy = dY + static_cast<std::ptrdiff_t>(t) * n;
    double* dx = dX + static_cast<std::ptrdiff_t>(t) * n;
    double xdy = 0.0;
    for (int i = 0; i < n; ++i) xdy += x[i] * dy[i];
    const double ri = r[t];
    const double c = ri * ri * ri * xdy / n;
    for (int i = 0; i < n; ++i) dx[i] += ri * dy[i] - c * x[i];
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double position_encoding(int t, int j, int d) {
  const double freq = std::pow(10000.0, -static_cast<double>(j - (j % 2)) / d);
  return kPositionScale * ((j % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq));
}

}  // namespace

void MicroModelConfig::validate() const {
  if (layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1) {
    fail(ErrorCode::kInvalidArgument, "micro model dimensions must be positive");
  }
  if (d_model % n_heads != 0) fail(ErrorCode::kInvalidArgument, "d_model must be divisible by n_heads");
  if (vocab < 8) fail(ErrorCode::kInvalidArgument, "vocab must be at least 8");
}

std::string MicroModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["layers"] = layers;
  j["d_model"] = d_model;
  j["n_heads"] = n_heads;
  j["d_ff"] = d_ff;
  j["vocab"] = vocab;
  j["seed"] = seed;
  return j.dump();
}

MicroModelConfig MicroModelConfig::from_json(const std::string& text) {
  MicroModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.layers = j.at("layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

ComponentManifest micro_manifest(const MicroModelConfig& c) {
  c.validate();
  std::vector<std::pair<ComponentId, std::vector<std::int64_t>>> shapes;
  const std::int64_t d = c.d_model, ff = c.d_ff;
  shapes.push_back({ComponentId::embedding(), {c.vocab, d}});
  for (int l = 0; l < c.layers; ++l) {
    shapes.push_back({{l, ComponentKind::kAttnQ}, {d, d}});
    shapes.push_back({{l, ComponentKind::kAttnK}, {d, d}});
    shapes.push_back({{l, ComponentKind::kAttnV}, {d, d}});
    shapes.push_back({{l, ComponentKind::kAttnO}, {d, d}});
    shapes.push_back({{l, ComponentKind::kMlpGate}, {ff, d}});
    shapes.push_back({{l, ComponentKind::kMlpUp}, {ff, d}});
    shapes.push_back({{l, ComponentKind::kMlpDown}, {d, ff}});
  }
  return ComponentManifest::from_shapes(shapes, "micro-transformer:" + c.to_json());
}

MicroModel::MicroModel(MicroModelConfig config)
    : config_(config), manifest_(micro_manifest(config)),
      params_(static_cast<std::size_t>(manifest_.total_params()), 0.0) {}

MicroModel MicroModel::initialize(const MicroModelConfig& config) {
  MicroModel m(config);
  Rng rng(config.seed);
  for (std::size_t k = 0; k < m.manifest_.size(); ++k) {
    const auto& e = m.manifest_[k];
    double std = kEmbeddingStd;
    if (!e.id.is_embedding()) {
      std = 1.0 / std::sqrt(static_cast<double>(e.shape[1]));
      if (e.id.kind == ComponentKind::kAttnO || e.id.kind == ComponentKind::kMlpDown) std *= 0.5;
    }
    double* w = m.params_.data() + m.manifest_.offset(k);
    for (std::int64_t i = 0; i < e.param_count; ++i) w[i] = std * rng.normal();
  }
  return m;
}

std::span<const double> MicroModel::component(std::size_t k) const {
  return {params_.data() + manifest_.offset(k), static_cast<std::size_t>(manifest_[k].param_count)};
}

struct MicroModel::Workspace {
  struct Layer {
    std::vector<double> h_in, r1, a, q, k, v, p, att, h_mid, r2, m, g, u, z;
  };
  std::vector<double> x0;
  std::vector<Layer> layers;
  std::vector<double> h_last, rf, hf;
};

void MicroModel::forward(std::span<const int> tokens, Workspace& ws) const {
  const int T = static_cast<int>(tokens.size());
  const int d = config_.d_model, ff = config_.d_ff, H = config_.n_heads, V = config_.vocab;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto Td = static_cast<std::size_t>(T) * d;
  const auto Tff = static_cast<std::size_t>(T) * ff;
  if (T == 0) fail(ErrorCode::kInvalidArgument, "empty token sequence");
  for (int tok : tokens) {
    if (tok < 0 || tok >= V) fail(ErrorCode::kInvalidArgument, "token id " + std::to_string(tok) + " out of vocab");
  }

  const double* E = params_.data();
  auto W = [&](int layer, int slot) { return params_.data() + manifest_.offset(1 + 7 * layer + slot); };

  ws.x0.resize(Td);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < d; ++j) {
      ws.x0[static_cast<std::size_t>(t) * d + j] =
          E[static_cast<std::size_t>(tokens[t]) * d + j] + position_encoding(t, j, d);
    }
  }
  ws.layers.resize(static_cast<std::size_t>(config_.layers));
  const std::vector<double>* h = &ws.x0;
  for (int l = 0; l < config_.layers; ++l) {
    auto& L = ws.layers[static_cast<std::size_t>(l)];
    L.h_in = *h;
    L.r1.resize(T);
    L.a.resize(Td);
    rms_forward(L.h_in.data(), T, d, L.a.data(), L.r1.data());
    L.q.resize(Td);
    L.k.resize(Td);
    L.v.resize(Td);
    linear(L.a.data(), T, d, W(l, 0), d, L.q.data());
    linear(L.a.data(), T, d, W(l, 1), d, L.k.data());
    linear(L.a.data(), T, d, W(l, 2), d, L.v.data());
    L.p.assign(static_cast<std::size_t>(H) * T * T, 0.0);
    L.att.assign(Td, 0.0);
    for (int hd = 0; hd < H; ++hd) {
      for (int t = 0; t < T; ++t) {
        double* prow = L.p.data() + (static_cast<std::size_t>(hd) * T + t) * T;
        double mx = -std::numeric_limits<double>::infinity();
        for (int u = 0; u <= t; ++u) {
          double s = 0.0;
          for (int i = 0; i < dh; ++i) s += L.q[t * d + hd * dh + i] * L.k[u * d + hd * dh + i];
          prow[u] = s * scale;
          mx = std::max(mx, prow[u]);
        }
        double z = 0.0;
        for (int u = 0; u <= t; ++u) {
          prow[u] = std::exp(prow[u] - mx);
          z += prow[u];
        }
        for (int u = 0; u <= t; ++u) {
          prow[u] /= z;
          for (int i = 0; i < dh; ++i) L.att[t * d + hd * dh + i] += prow[u] * L.v[u * d + hd * dh + i];
        }
      }
    }
    L.h_mid.resize(Td);
    linear(L.att.data(), T, d, W(l, 3), d, L.h_mid.data());
    for (std::size_t i = 0; i < Td; ++i) L.h_mid[i] += L.h_in[i];
    L.r2.resize(T);
    L.m.resize(Td);
    rms_forward(L.h_mid.data(), T, d, L.m.data(), L.r2.data());
    L.g.resize(Tff);
    L.u.resize(Tff);
    L.z.resize(Tff);
    linear(L.m.data(), T, d, W(l, 4), ff, L.g.data());
    linear(L.m.data(), T, d, W(l, 5), ff, L.u.data());
    for (std::size_t i = 0; i < Tff; ++i) L.z[i] = L.g[i] * sigmoid(L.g[i]) * L.u[i];
    std::vector<double> out(Td);
    linear(L.z.data(), T, ff, W(l, 6), d, out.data());
    for (std::size_t i = 0; i < Td; ++i) out[i] += L.h_mid[i];
    if (l + 1 == config_.layers) {
      ws.h_last = std::move(out);
      h = &ws.h_last;
    } else {
      ws.layers[static_cast<std::size_t>(l + 1)].h_in = std::move(out);
      h = &ws.layers[static_cast<std::size_t>(l + 1)].h_in;
    }
  }
  if (config_.layers > 0 && h != &ws.h_last) ws.h_last = *h;
  ws.rf.resize(T);
  ws.hf.resize(Td);
  rms_forward(ws.h_last.data(), T, d, ws.hf.data(), ws.rf.data());
}

double MicroModel::run(std::span<const int> tokens, std::span<const int> targets, std::span<const char> mask,
                       std::span<double> grad) const {
  const int T = static_cast<int>(tokens.size());
  const int d = config_.d_model, ff = config_.d_ff, H = config_.n_heads, V = config_.vocab;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto Td = static_cast<std::size_t>(T) * d;
  const auto Tff = static_cast<std::size_t>(T) * ff;
  const double* E = params_.data();
  auto W = [&](int layer, int slot) { return params_.data() + manifest_.offset(1 + 7 * layer + slot); };
  Workspace ws;
  forward(tokens, ws);

  // Loss over masked positions.
  int count = 0;
  for (int t = 0; t < T; ++t) count += mask[t] ? 1 : 0;
  if (count == 0) fail(ErrorCode::kInvalidArgument, "no loss positions (empty completion)");
  const bool backward = !grad.empty();
  std::vector<double> dhf;
  if (backward) {
    if (grad.size() != params_.size()) fail(ErrorCode::kInvalidArgument, "gradient buffer has wrong size");
    std::fill(grad.begin(), grad.end(), 0.0);
    dhf.assign(Td, 0.0);
  }
  double loss = 0.0;
  std::vector<double> logits(V);
  for (int t = 0; t < T; ++t) {
    if (!mask[t]) continue;
    const int y = targets[t];
    if (y < 0 || y >= V) fail(ErrorCode::kInvalidArgument, "target token out of vocab");
    const double* hv = ws.hf.data() + static_cast<std::size_t>(t) * d;
    double mx = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < V; ++v) {
      double s = 0.0;
      const double* e = E + static_cast<std::size_t>(v) * d;
      for (int j = 0; j < d; ++j) s += hv[j] * e[j];
      logits[v] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (int v = 0; v < V; ++v) z += std::exp(logits[v] - mx);
    const double lse = mx + std::log(z);
    loss += lse - logits[y];
    if (backward) {
      double* dE = grad.data();
      double* dhv = dhf.data() + static_cast<std::size_t>(t) * d;
      for (int v = 0; v < V; ++v) {
        double g = std::exp(logits[v] - lse);
        if (v == y) g -= 1.0;
        g /= count;
        const double* e = E + static_cast<std::size_t>(v) * d;
        double* de = dE + static_cast<std::size_t>(v) * d;
        for (int j = 0; j < d; ++j) {
          dhv[j] += g * e[j];
          de[j] += g * hv[j];
        }
      }
    }
  }
  loss /= count;
  if (!backward) return loss;

  auto dW = [&](int layer, int slot) { return grad.data() + manifest_.offset(1 + 7 * layer + slot); };
  std::vector<double> dres(Td, 0.0);
  rms_backward(ws.h_last.data(), ws.rf.data(), T, d, dhf.data(), dres.data());
  for (int l = config_.layers - 1; l >= 0; --l) {
    auto& L = ws.layers[static_cast<std::size_t>(l)];
    // MLP block; dres is the gradient w.r.t. the block output.
    std::vector<double> dz(Tff, 0.0);
    linear_back(L.z.data(), T, ff, W(l, 6), d, dres.data(), dz.data(), dW(l, 6));
    std::vector<double> dg(Tff), du(Tff);
    for (std::size_t i = 0; i < Tff; ++i) {
      const double sg = sigmoid(L.g[i]);
      const double silu = L.g[i] * sg;
      du[i] = dz[i] * silu;
      dg[i] = dz[i] * L.u[i] * sg * (1.0 + L.g[i] * (1.0 - sg));
    }
    std::vector<double> dm(Td, 0.0);
    linear_back(L.m.data(), T, d, W(l, 4), ff, dg.data(), dm.data(), dW(l, 4));
    linear_back(L.m.data(), T, d, W(l, 5), ff, du.data(), dm.data(), dW(l, 5));
    std::vector<double> dh_mid = dres;
    rms_backward(L.h_mid.data(), L.r2.data(), T, d, dm.data(), dh_mid.data());

    // Attention block.
    std::vector<double> datt(Td, 0.0);
    linear_back(L.att.data(), T, d, W(l, 3), d, dh_mid.data(), datt.data(), dW(l, 3));
    std::vector<double> dq(Td, 0.0), dk(Td, 0.0), dv(Td, 0.0);
    std::vector<double> dp(static_cast<std::size_t>(T));
    for (int hd = 0; hd < H; ++hd) {
      for (int t = 0; t < T; ++t) {
        const double* prow = L.p.data() + (static_cast<std::size_t>(hd) * T + t) * T;
        double pdp = 0.0;
        for (int u = 0; u <= t; ++u) {
          double s = 0.0;
          for (int i = 0; i < dh; ++i) {
            s += datt[t * d + hd * dh + i] * L.v[u * d + hd * dh + i];
            dv[u * d + hd * dh + i] += prow[u] * datt[t * d + hd * dh + i];
          }
          dp[u] = s;
          pdp += prow[u] * s;
        }
        for (int u = 0; u <= t; ++u) {
          const double ds = prow[u] * (dp[u] - pdp) * scale;
          for (int i = 0; i < dh; ++i) {
            dq[t * d + hd * dh + i] += ds * L.k[u * d + hd * dh + i];
            dk[u * d + hd * dh + i] += ds * L.q[t * d + hd * dh + i];
          }
        }
      }
    }
    std::vector<double> da(Td, 0.0);
    linear_back(L.a.data(), T, d, W(l, 0), d, dq.data(), da.data(), dW(l, 0));
    linear_back(L.a.data(), T, d, W(l, 1), d, dk.data(), da.data(), dW(l, 1));
    linear_back(L.a.data(), T, d, W(l, 2), d, dv.data(), da.data(), dW(l, 2));
    dres = dh_mid;
    rms_backward(L.h_in.data(), L.r1.data(), T, d, da.data(), dres.data());
  }
  double* dE = grad.data();
  for (int t = 0; t < T; ++t) {
    double* de = dE + static_cast<std::size_t>(tokens[t]) * d;
    for (int j = 0; j < d; ++j) de[j] += dres[static_cast<std::size_t>(t) * d + j];
  }
  return loss;
}

namespace {

struct Sequence {
  std::vector<int> tokens, targets;
  std::vector<char> mask;
};

Sequence make_sequence(const ToySample& s) {
  if (s.completion_tokens.empty()) {
    fail(ErrorCode::kInvalidArgument, "sample " + std::to_string(s.sample_id) + " has an empty completion");
  }
  Sequence seq;
  seq.tokens = s.prompt_tokens;
  seq.tokens.insert(seq.tokens.end(), s.completion_tokens.begin(), s.completion_tokens.end());
  const std::size_t T = seq.tokens.size();
  seq.targets.assign(T, 0);
  seq.mask.assign(T, 0);
  // Position t predicts token t + 1; completion tokens are the only targets.
  for (std::size_t t = 0; t + 1 < T; ++t) {
    seq.targets[t] = seq.tokens[t + 1];
    seq.mask[t] = (t + 1 >= s.prompt_tokens.size()) ? 1 : 0;
  }
  if (s.prompt_tokens.empty()) {
    fail(ErrorCode::kInvalidArgument, "sample " + std::to_string(s.sample_id) + " has an empty prompt");
  }
  return seq;
}

}  // namespace

double MicroModel::loss(const ToySample& sample) const {
  const auto seq = make_sequence(sample);
  return run(seq.tokens, seq.targets, seq.mask, {});
}

double MicroModel::loss(std::span<const int> tokens, std::span<const int> targets, std::span<const char> mask) const {
  if (targets.size() != tokens.size() || mask.size() != tokens.size()) {
    fail(ErrorCode::kInvalidArgument, "tokens, targets and mask must have equal length");
  }
  return run(tokens, targets, mask, {});
}

double MicroModel::loss_and_grad(const ToySample& sample, std::span<double> grad) const {
  const auto seq = make_sequence(sample);
  return run(seq.tokens, seq.targets, seq.mask, grad);
}

GradientRecord MicroModel::sample_gradient(const ToySample& sample) const {
  std::vector<double> grad(params_.size());
  loss_and_grad(sample, grad);
  GradientRecord record;
  record.sample_id = sample.sample_id;
  record.blocks.resize(manifest_.size());
  for (std::size_t k = 0; k < manifest_.size(); ++k) {
    const auto off = static_cast<std::size_t>(manifest_.offset(k));
    const auto n = static_cast<std::size_t>(manifest_[k].param_count);
    record.blocks[k].resize(n);
    for (std::size_t i = 0; i < n; ++i) record.blocks[k][i] = static_cast<float>(grad[off + i]);
  }
  return record;
}

std::vector<double> MicroModel::next_token_logits(std::span<const int> tokens) const {
  if (tokens.empty()) fail(ErrorCode::kInvalidArgument, "empty token sequence");
  Workspace ws;
  forward(tokens, ws);
  const int d = config_.d_model, V = config_.vocab;
  const double* hv = ws.hf.data() + (tokens.size() - 1) * static_cast<std::size_t>(d);
  std::vector<double> logits(static_cast<std::size_t>(V));
  for (int v = 0; v < V; ++v) {
    const double* e = params_.data() + static_cast<std::size_t>(v) * d;
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += hv[j] * e[j];
    logits[static_cast<std::size_t>(v)] = s;
  }
  return logits;
}

std::vector<int> MicroModel::greedy_decode(std::span<const int> prompt, std::size_t max_tokens, int eos) const {
  std::vector<int> seq(prompt.begin(), prompt.end());
  std::vector<int> out;
  while (out.size() < max_tokens) {
    const auto logits = next_token_logits(seq);
    const int next = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    out.push_back(next);
    seq.push_back(next);
    if (next == eos) break;
  }
  return out;
}

void MicroModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  const std::string cfg = config_.to_json();
  out.write(kCheckpointMagic.data(), 4);
  detail::put<std::uint32_t>(out, 1);
  detail::put<std::uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::put<std::uint64_t>(out, params_.size());
  detail::put_array<double>(out, params_);
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

MicroModel MicroModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4 || magic != kCheckpointMagic) fail(ErrorCode::kBadMagic, path.string() + ": not a checkpoint");
  if (detail::get<std::uint32_t>(in, "version") != 1) fail(ErrorCode::kUnsupportedVersion, path.string());
  const auto len = detail::get<std::uint64_t>(in, "config length");
  if (len > (1U << 20)) fail(ErrorCode::kFormat, path.string() + ": implausible config length");
  std::string cfg(len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(len));
  MicroModel m(MicroModelConfig::from_json(cfg));
  const auto n = detail::get<std::uint64_t>(in, "parameter count");
  if (n != m.params_.size()) fail(ErrorCode::kFormat, path.string() + ": parameter count mismatch");
  detail::get_array<double>(in, std::span<double>(m.params_), "parameters");
  return m;
}

// ---------------------------------------------------------------------------

double mean_loss(const MicroModel& model, const std::vector<ToySample>& corpus) {
  std::vector<double> losses(corpus.size());
  parallel_for(corpus.size(), 0, [&](std::size_t i) { losses[i] = model.loss(corpus[i]); });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return corpus.empty() ? 0.0 : sum / static_cast<double>(corpus.size());
}

MicroModel train_micro_model(const MicroModelConfig& config, const std::vector<ToySample>& corpus,
                             const TrainOptions& options) {
  if (corpus.empty()) fail(ErrorCode::kInvalidArgument, "training corpus is empty");
  if (options.steps < 0) fail(ErrorCode::kInvalidArgument, "negative step count");
  MicroModel model = MicroModel::initialize(config);
  if (options.steps == 0) return model;
  const std::size_t P = model.parameters().size();
  const std::size_t B = std::max<std::size_t>(1, std::min(options.batch_size, corpus.size()));
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  std::vector<double> m1(P, 0.0), m2(P, 0.0), grad(P);
  std::vector<std::vector<double>> per_sample(B, std::vector<double>(P));
  std::vector<double> losses(B);
  Rng rng(derive_seed(config.seed, 0x7472));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  std::vector<std::size_t> batch(B);
  for (int step = 1; step <= options.steps; ++step) {
    for (std::size_t b = 0; b < B; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch[b] = order[cursor++];
    }
    parallel_for(B, options.threads,
                 [&](std::size_t b) { losses[b] = model.loss_and_grad(corpus[batch[b]], per_sample[b]); });
    double loss = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      loss += losses[b];
      for (std::size_t i = 0; i < P; ++i) grad[i] += per_sample[b][i];
    }
    loss /= static_cast<double>(B);
    if (!std::isfinite(loss)) {
      fail(ErrorCode::kNumerical, "training diverged: non-finite loss at step " + std::to_string(step));
    }
    const double c1 = 1.0 - std::pow(kBeta1, step);
    const double c2 = 1.0 - std::pow(kBeta2, step);
    auto params = model.parameters();
    for (std::size_t i = 0; i < P; ++i) {
      const double g = grad[i] / static_cast<double>(B);
      m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * g;
      m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * g * g;
      params[i] -= options.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + kAdamEps);
    }
    if (options.on_step) options.on_step(step, loss);
  }
  return model;
}

GradCheckResult check_gradients(const MicroModel& model, const ToySample& sample, std::size_t coords_per_component,
                                std::uint64_t seed, double floor) {
  MicroModel probe = model;
  std::vector<double> grad(model.parameters().size());
  probe.loss_and_grad(sample, grad);
  const auto& manifest = model.manifest();
  GradCheckResult result;
  result.max_rel_error.assign(manifest.size(), 0.0);
  auto params = probe.parameters();
  for (std::size_t k = 0; k < manifest.size(); ++k) {
    const auto n = static_cast<std::uint64_t>(manifest[k].param_count);
    std::vector<std::uint64_t> coords(n);
    for (std::uint64_t i = 0; i < n; ++i) coords[i] = i;
    Rng rng(derive_seed(seed, k));
    rng.shuffle(coords);
    coords.resize(std::min<std::uint64_t>(n, coords_per_component));
    for (auto c : coords) {
      const auto idx = static_cast<std::size_t>(manifest.offset(k)) + static_cast<std::size_t>(c);
      const double w = params[idx];
      const double step = 1e-5 * (1.0 + std::abs(w));
      params[idx] = w + step;
      const double up = probe.loss(sample);
      params[idx] = w - step;
      const double down = probe.loss(sample);
      params[idx] = w;
      const double fd = (up - down) / (2.0 * step);
      const double g = grad[idx];
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor});
      result.max_rel_error[k] = std::max(result.max_rel_error[k], rel);
      ++result.coordinates_checked;
    }
    result.overall_max = std::max(result.overall_max, result.max_rel_error[k]);
  }
  return result;
}

}  // namespace gradsel::toy
