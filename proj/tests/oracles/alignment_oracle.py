# Copyright 2026 The gradsel Authors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Cosine between two hand-built three-entry score vectors."""
import math

a = [0.5, -0.2, 0.9]
b = [0.4, 0.1, 0.8]
num = sum(x * y for x, y in zip(a, b))
print(repr(num / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))))
