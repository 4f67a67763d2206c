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

"""Okapi BM25 evaluated term by term for the three-document example.

Prints one score per document; the C++ test embeds these values.
"""
import math

docs = [["a", "b"], ["a", "a", "b"], ["c"]]
query = ["a"]
k1, b = 1.2, 0.75
N = len(docs)
avgdl = sum(len(d) for d in docs) / N

for d in docs:
    score = 0.0
    for t in query:
        df = sum(1 for x in docs if t in x)
        idf = math.log((N - df + 0.5) / (df + 0.5) + 1.0)
        tf = d.count(t)
        score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avgdl))
    print(repr(score))
