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

import json
import struct

import numpy as np
import pytest

import gradsel


def small_manifest():
    return gradsel.ComponentManifest.from_shapes(
        [("embedding", [4, 3]), ("L0.attn_q", [2, 3]), ("L0.mlp_down", [5])], "py"
    )


def random_records(manifest, n, seed):
    rng = np.random.default_rng(seed)
    return [
        (i, [rng.standard_normal(c).astype(np.float32) for c in manifest.param_counts])
        for i in range(n)
    ]


def test_manifest_properties():
    m = small_manifest()
    assert len(m) == 3
    assert m.total_params == 12 + 6 + 5
    assert m.components == ["embedding", "L0.attn_q", "L0.mlp_down"]
    assert m.offset(2) == 18
    assert m.index_of("L0.attn_q") == 1
    assert gradsel.ComponentManifest.from_json(m.to_json()) == m


def test_gradient_file_round_trip(tmp_path):
    m = small_manifest()
    recs = random_records(m, 5, 0)
    gradsel.write_gradient_file(m, recs, tmp_path / "g.gsg")
    m2, back = gradsel.read_gradient_file(tmp_path / "g.gsg")
    assert m2 == m
    for (i, blocks), (j, got) in zip(recs, back):
        assert i == j
        for a, b in zip(blocks, got):
            assert a.tobytes() == b.tobytes()


def test_file_written_by_plain_python_is_readable(tmp_path):
    # Independent writer using only struct and json.
    m = small_manifest()
    header = {"manifest": json.loads(m.to_json()), "block_lengths": m.param_counts}
    text = json.dumps(header).encode()
    recs = random_records(m, 3, 1)
    with open(tmp_path / "py.gsg", "wb") as f:
        f.write(b"GSG1")
        f.write(struct.pack("<IQQ", 1, len(recs), len(text)))
        f.write(text)
        for sid, blocks in recs:
            f.write(struct.pack("<q", sid))
            for b in blocks:
                f.write(b.astype("<f4").tobytes())
    _, back = gradsel.read_gradient_file(tmp_path / "py.gsg")
    assert [r[0] for r in back] == [0, 1, 2]
    np.testing.assert_array_equal(back[2][1][1], recs[2][1][1])


def test_errors_carry_codes(tmp_path):
    (tmp_path / "bad.gsg").write_bytes(b"NOPE" + b"\0" * 32)
    with pytest.raises(gradsel.GradselError) as info:
        gradsel.read_gradient_file(tmp_path / "bad.gsg")
    assert info.value.code == "bad magic"


def test_pair_dots_hand_values():
    a = (0, [np.array([1, 2], np.float32), np.array([3], np.float32)])
    b = (1, [np.array([4, 5], np.float32), np.array([6], np.float32)])
    assert gradsel.compute_pair_dots(a, b) == [14.0, 18.0]


def test_bm25_matches_oracle():
    s = gradsel.bm25_scores("a", ["a b", "a a b", "c"])
    assert s[0] == pytest.approx(0.47000362924573563, abs=1e-12)
    assert s[1] == pytest.approx(0.5665797174469143, abs=1e-12)
    assert s[2] == 0.0


def test_cache_cosines_match_numpy(tmp_path):
    m = small_manifest()
    q = random_records(m, 6, 2)
    c = random_records(m, 6, 3)
    gradsel.write_gradient_file(m, q, tmp_path / "q.gsg")
    gradsel.write_gradient_file(m, c, tmp_path / "c.gsg")
    sets = [
        {"query_id": i, "b": 3, "members": [i, (i + 1) % 6, (i + 2) % 6]} for i in range(6)
    ]
    cache = gradsel.build_cache(tmp_path / "q.gsg", tmp_path / "c.gsg", sets)
    assert cache.num_pairs == 18
    subset = ["embedding", "L0.mlp_down"]
    for qi, ci in cache.pairs:
        a = np.concatenate([q[qi][1][0], q[qi][1][2]]).astype(np.float64)
        b = np.concatenate([c[ci][1][0], c[ci][1][2]]).astype(np.float64)
        want = a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12)
        got = gradsel.reconstruct_cosine(cache, m, qi, ci, subset)
        assert got == pytest.approx(want, abs=1e-9)
    cache.save(tmp_path / "cache.gsd")
    assert gradsel.load_cache(tmp_path / "cache.gsd", m) == cache

    trace = gradsel.greedy_select(cache, m, sets)
    sweep = gradsel.single_component_sweep(cache, m, sets)
    # Sweep keys are in manifest order, so max() keeps the first of any tie.
    best = max(sweep.items(), key=lambda kv: kv[1])
    assert trace["steps"][0]["component"] == best[0]
    assert trace["steps"][-1]["objective_value"] == gradsel.evaluate_subset(cache, m, sets)


def test_allocate_dims():
    m = gradsel.ComponentManifest.from_shapes(
        [("embedding", [7]), ("L0.attn_q", [2]), ("L0.attn_k", [1])]
    )
    assert gradsel.allocate_dims(m, 5) == [3, 1, 1]


def test_tiny_benchmark(tmp_path):
    reports = gradsel.toy.run_benchmark(
        {
            "n_samples": 30,
            "b": 3,
            "train_steps": 5,
            "layers": 1,
            "d_model": 8,
            "n_heads": 2,
            "d_ff": 12,
            "projection_fractions": [0.05],
            "work_dir": str(tmp_path / "bench"),
        }
    )
    assert [r["setting"] for r in reports] == ["paraphrased", "model_generated"]
    for r in reports:
        assert 0.0 <= r["full_accuracy"] <= 1.0
        assert len(r["trace"]["steps"]) == 1 + 7
    check = gradsel.toy.check_gradients(
        tmp_path / "bench" / "model.gsm", tmp_path / "bench" / "corpus_base.jsonl", coords=16
    )
    assert check["max_rel_error"] < 1e-4
