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

"""Python bindings for gradsel.

Gradient records are ``(sample_id, [numpy.float32 arrays])`` tuples with one
array per manifest component. Candidate sets may be given as a path to a
candidate-set JSON file or as the list of dicts returned by
:func:`build_candidate_sets`.
"""

from ._core import (
    ComponentManifest,
    DotCache,
    GradselError,
    allocate_dims,
    bm25_scores,
    build_cache,
    build_candidate_sets,
    compute_pair_dots,
    evaluate_subset,
    greedy_select,
    load_cache,
    load_candidate_sets,
    project_gradient_file,
    projected_accuracy,
    read_gradient_file,
    read_projected_file,
    reconstruct_cosine,
    save_candidate_sets,
    score_table,
    single_component_sweep,
    tokenize,
    toy,
    write_gradient_file,
)

__version__ = "0.1.0"

__all__ = [
    "ComponentManifest",
    "DotCache",
    "GradselError",
    "allocate_dims",
    "bm25_scores",
    "build_cache",
    "build_candidate_sets",
    "compute_pair_dots",
    "evaluate_subset",
    "greedy_select",
    "load_cache",
    "load_candidate_sets",
    "project_gradient_file",
    "projected_accuracy",
    "read_gradient_file",
    "read_projected_file",
    "reconstruct_cosine",
    "save_candidate_sets",
    "score_table",
    "single_component_sweep",
    "tokenize",
    "toy",
    "write_gradient_file",
]
