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

#pragma once

#include <string>
#include <vector>

namespace gradsel::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct HLine {
  std::string name;
  double y = 0.0;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<HLine> baselines;  // drawn dashed
  bool log_x = false;
};

struct BoxGroup {
  std::string name;
  std::vector<double> values;
};

struct BoxChart {
  std::string title;
  std::string y_label;
  std::vector<BoxGroup> groups;
};

/// Min, lower quartile, median, upper quartile, max (linear interpolation
/// between order statistics). Throws on empty input.
struct FiveNumber {
  double min, q1, median, q3, max;
};
FiveNumber five_number_summary(std::vector<double> values);

std::string render_svg(const LineChart& chart);
std::string render_svg(const BoxChart& chart);

}  // namespace gradsel::plot
