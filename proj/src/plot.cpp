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

#include "gradsel/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gradsel/error.hpp"

namespace gradsel::plot {
namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) {
      lo = 0;
      hi = 1;
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

std::string header(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                  num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
       "</text>\n";
  return s;
}

std::string axes(const Range& yr, const std::string& y_label, const std::string& x_label) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::string s;
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    const double py = y0 - (y0 - y1) * i / 5.0;
    s += "<line x1=\"" + num(x0 - 4) + "\" y1=\"" + num(py) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(py) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(x0 - 7) + "\" y=\"" + num(py + 4) + "\" text-anchor=\"end\">" + tick_label(v) +
         "</text>\n";
  }
  s += "<text x=\"18\" y=\"" + num((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       num((y0 + y1) / 2) + ")\">" + escape(y_label) + "</text>\n";
  if (!x_label.empty()) {
    s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kHeight - 15) + "\" text-anchor=\"middle\">" +
         escape(x_label) + "</text>\n";
  }
  return s;
}

}  // namespace

FiveNumber five_number_summary(std::vector<double> v) {
  if (v.empty()) fail(ErrorCode::kInvalidArgument, "five-number summary of an empty set");
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const std::size_t j = std::min(i + 1, v.size() - 1);
    return v[i] + (pos - static_cast<double>(i)) * (v[j] - v[i]);
  };
  return {v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

std::string render_svg(const LineChart& chart) {
  Range xr, yr;
  auto tx = [&](double x) { return chart.log_x ? std::log10(x) : x; };
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size()) fail(ErrorCode::kInvalidArgument, "series '" + s.name + "' has mismatched x/y");
    for (double x : s.x) {
      if (chart.log_x && !(x > 0)) fail(ErrorCode::kInvalidArgument, "log axis needs positive x");
      xr.add(tx(x));
    }
    for (double y : s.y) yr.add(y);
  }
  for (const auto& h : chart.baselines) yr.add(h.y);
  xr.finish();
  yr.finish();
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  auto px = [&](double x) { return x0 + (tx(x) - xr.lo) / (xr.hi - xr.lo) * (x1 - x0); };
  auto py = [&](double y) { return y0 - (y - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };

  std::string s = header(chart.title) + axes(yr, chart.y_label, chart.x_label);
  for (int i = 0; i <= 5; ++i) {
    const double v = xr.lo + (xr.hi - xr.lo) * i / 5.0;
    const double x = x0 + (x1 - x0) * i / 5.0;
    s += "<text x=\"" + num(x) + "\" y=\"" + num(y0 + 18) + "\" text-anchor=\"middle\">" +
         tick_label(chart.log_x ? std::pow(10.0, v) : v) + "</text>\n";
  }
  std::size_t legend = 0;
  auto legend_entry = [&](const std::string& name, const std::string& color, bool dashed) {
    const double ly = kTop + 10 + 18.0 * static_cast<double>(legend++);
    s += "<line x1=\"" + num(x1 + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(x1 + 30) + "\" y2=\"" + num(ly) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"" + (dashed ? " stroke-dasharray=\"5,4\"" : "") + "/>\n";
    s += "<text x=\"" + num(x1 + 35) + "\" y=\"" + num(ly + 4) + "\">" + escape(name) + "</text>\n";
  };
  for (std::size_t i = 0; i < chart.series.size(); ++i) {
    const auto& ser = chart.series[i];
    const std::string color = kPalette[i % kPalette.size()];
    std::string pts;
    for (std::size_t j = 0; j < ser.x.size(); ++j) {
      if (!std::isfinite(ser.y[j])) continue;
      pts += num(px(ser.x[j])) + "," + num(py(ser.y[j])) + " ";
      s += "<circle cx=\"" + num(px(ser.x[j])) + "\" cy=\"" + num(py(ser.y[j])) + "\" r=\"2.5\" fill=\"" + color +
           "\"/>\n";
    }
    s += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    legend_entry(ser.name, color, false);
  }
  for (const auto& h : chart.baselines) {
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(py(h.y)) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(py(h.y)) +
         "\" stroke=\"gray\" stroke-width=\"1.5\" stroke-dasharray=\"5,4\"/>\n";
    legend_entry(h.name, "gray", true);
  }
  s += "</svg>\n";
  return s;
}

std::string render_svg(const BoxChart& chart) {
  Range yr;
  for (const auto& g : chart.groups) {
    for (double v : g.values) yr.add(v);
  }
  yr.finish();
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  auto py = [&](double y) { return y0 - (y - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };
  std::string s = header(chart.title) + axes(yr, chart.y_label, "");
  const double slot = (x1 - x0) / static_cast<double>(std::max<std::size_t>(1, chart.groups.size()));
  for (std::size_t i = 0; i < chart.groups.size(); ++i) {
    const auto& g = chart.groups[i];
    const double cx = x0 + slot * (static_cast<double>(i) + 0.5);
    const double half = slot * 0.3;
    s += "<text x=\"" + num(cx) + "\" y=\"" + num(y0 + 18) + "\" text-anchor=\"middle\">" + escape(g.name) +
         "</text>\n";
    if (g.values.empty()) continue;
    const auto f = five_number_summary(g.values);
    const std::string color = kPalette[i % kPalette.size()];
    s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(py(f.min)) + "\" x2=\"" + num(cx) + "\" y2=\"" + num(py(f.max)) +
         "\" stroke=\"black\"/>\n";
    s += "<rect x=\"" + num(cx - half) + "\" y=\"" + num(py(f.q3)) + "\" width=\"" + num(2 * half) +
         "\" height=\"" + num(std::max(1.0, py(f.q1) - py(f.q3))) + "\" fill=\"" + color +
         "\" fill-opacity=\"0.5\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(cx - half) + "\" y1=\"" + num(py(f.median)) + "\" x2=\"" + num(cx + half) +
         "\" y2=\"" + num(py(f.median)) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double v : {f.min, f.max}) {
      s += "<line x1=\"" + num(cx - half / 2) + "\" y1=\"" + num(py(v)) + "\" x2=\"" + num(cx + half / 2) +
           "\" y2=\"" + num(py(v)) + "\" stroke=\"black\"/>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace gradsel::plot
