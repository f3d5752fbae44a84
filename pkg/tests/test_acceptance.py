"""End-to-end acceptance checks, one test per shipping criterion.

Each test prints a single PASS/FAIL line naming its criterion, so the
verbose run doubles as a sign-off checklist. Oracles live in oracles.py and
are deliberately written as straight-line loops, independent of the package
internals.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from helpers import permute_stack, random_attention, random_stack, uniform_attention
from oracles import naive_attention, naive_select_tokens
from pmtk import cli, costmodel, encoder, kernels, selector, tensorio
from pmtk.selector import SelectionConfig
from pmtk.tensorio import TensorFormatError


def report(criterion, description, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    suffix = f" [{detail}]" if detail else ""
    print(f"{status} criterion {criterion}: {description}{suffix}")
    assert passed, f"criterion {criterion} failed: {description}{suffix}"


# --------------------------------------------------------------------------
# Criterion 1: selector invariants over >= 1000 randomized cases per suite,
# all five suites together in under 60 seconds.
# --------------------------------------------------------------------------

def test_criterion_1_selector_invariant_suites():
    cases = 1000
    started = time.monotonic()
    rng = np.random.default_rng(101)

    # Suite A: gather copies selected rows bit for bit.
    for _ in range(cases):
        n = int(rng.integers(1, 33))
        d = int(rng.integers(1, 17))
        emb = (rng.standard_normal((n, d)) * rng.uniform(0.1, 100)).astype(np.float32)
        idx = rng.integers(0, n, size=int(rng.integers(0, n + 1)))
        out = selector.gather(emb, idx)
        assert out.shape == (idx.size, d)
        for row, i in zip(out, idx):
            assert row.tobytes() == emb[int(i)].tobytes()

    # Suite B: permuting tokens permutes the selection and nothing else.
    for _ in range(cases):
        n = int(rng.integers(4, 17))
        stack = random_stack(rng, n, int(rng.integers(2, 5)),
                             sharp=float(rng.uniform(0.5, 5.0)))
        cfg = SelectionConfig(k=int(rng.integers(1, 5)))
        perm = rng.permutation(n)
        base = selector.select_tokens(stack, cfg)
        moved = selector.select_tokens(permute_stack(stack, perm), cfg)
        assert sorted(int(perm[i]) for i in moved.selected) == base.selected.tolist()
        assert sorted(int(perm[i]) for i in moved.pivotal) == base.pivotal.tolist()
        assert sorted(int(perm[i]) for i in moved.complementary) == \
            base.complementary.tolist()

    # Suite C: top-k picks are invariant under positive rescaling.
    for _ in range(cases):
        n = int(rng.integers(1, 65))
        scores = rng.uniform(0, 10, size=n)
        k = int(rng.integers(0, n + 1))
        base = selector.top_k_indices(scores, k)
        for alpha in (2.0 ** -40, 0.125, 2.0 ** 20, float(rng.uniform(0.5, 4.0))):
            np.testing.assert_array_equal(
                selector.top_k_indices(scores * alpha, k), base)

    # Suite D: pivotal and complementary sets partition the selection.
    for _ in range(cases):
        n = int(rng.integers(4, 25))
        stack = random_stack(rng, n, int(rng.integers(2, 5)),
                             sharp=float(rng.uniform(1.0, 6.0)))
        m_max = None if rng.random() < 0.5 else int(rng.integers(1, n + 1))
        cfg = SelectionConfig(k=int(rng.integers(1, 4)), m_max=m_max)
        res = selector.select_tokens(stack, cfg)
        piv = set(res.pivotal.tolist())
        comp = set(res.complementary.tolist())
        assert piv.isdisjoint(comp)
        assert sorted(piv | comp) == res.selected.tolist()
        assert all(b > a for a, b in zip(res.selected, res.selected[1:]))
        if m_max is not None:
            assert res.m <= m_max
        assert {t.index for t in res.provenance} == set(res.selected.tolist())

    # Suite E: contribution degrees stay inside [0, n-1] exactly.
    for _ in range(cases):
        n = int(rng.integers(2, 65))
        a = random_attention(rng, n, sharp=float(rng.uniform(0.1, 40.0)))
        r = selector.contribution_degree(a).r
        assert np.all(r >= 0.0) and np.all(r <= float(n - 1))

    elapsed = time.monotonic() - started
    report(1, f"five invariant suites x {cases} randomized cases",
           elapsed < 60.0, f"{elapsed:.1f}s (limit 60s)")


# --------------------------------------------------------------------------
# Criterion 2: full selection equals a straight-line oracle on >= 100
# encoder traces with n <= 64 and L <= 6, zero mismatches, under 120 s.
# --------------------------------------------------------------------------

def test_criterion_2_selection_oracle_equivalence():
    started = time.monotonic()
    rng = np.random.default_rng(202)
    patterns = ("noise", "noise", "noise", "checkerboard", "gradient")
    mismatches = []
    traces = 0
    while traces < 110:
        image_size = int(rng.choice([8, 16, 24, 32]))
        heads = int(rng.choice([2, 4]))
        dim = int(rng.choice([8, 12, 16]))
        if dim % heads:
            continue
        layers = int(rng.integers(2, 7))
        cfg = encoder.EncoderConfig(
            image_size=image_size, patch_size=4, channels=3, dim=dim,
            heads=heads, layers=layers, ffn_dim=int(rng.choice([8, 16])),
            seed=int(rng.integers(0, 10_000)),
            use_pos_embed=bool(rng.random() < 0.8),
        )
        image = encoder.synthetic_image(str(rng.choice(patterns)), cfg)
        trace = encoder.forward(image, encoder.init_weights(cfg), cfg)
        assert trace.n <= 64 and trace.layers <= 6

        k = int(rng.integers(1, 7))
        lam = float(rng.choice([0.5, 1.0, 1.5, 2.5]))
        m_max = None if rng.random() < 0.6 else int(rng.integers(1, trace.n + 1))
        if rng.random() < 0.5:
            start = min(math.ceil(layers / 4), layers - 2)
            end = layers - 2
            cfg_sel = SelectionConfig(k=k, iqr_lambda=lam, m_max=m_max)
        else:
            start = int(rng.integers(0, layers - 1))
            end = int(rng.integers(start, layers - 1))
            cfg_sel = SelectionConfig(k=k, start_layer=start, end_layer=end,
                                      iqr_lambda=lam, m_max=m_max)

        result = selector.select_tokens(trace, cfg_sel)
        expect = naive_select_tokens(list(trace.attention), k, start, end, lam, m_max)
        got = {
            "selected": result.selected.tolist(),
            "pivotal": result.pivotal.tolist(),
            "complementary": result.complementary.tolist(),
            "dropped": [t.index for t in result.dropped],
        }
        want = {key: expect[key] for key in got}
        if got != want:
            mismatches.append((traces, got, want))
        traces += 1

    elapsed = time.monotonic() - started
    report(2, f"selection matches the straight-line oracle on {traces} encoder traces",
           not mismatches and elapsed < 120.0,
           f"{len(mismatches)} mismatches, {elapsed:.1f}s (limit 120s)")


# --------------------------------------------------------------------------
# Criterion 3: attention agrees with a naive triple-loop evaluation within
# 1e-4 absolute on >= 100 random instances (n <= 32, d_k <= 16).
# --------------------------------------------------------------------------

def test_criterion_3_attention_oracle_equivalence():
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(120):
        n = int(rng.integers(1, 33))
        d_k = int(rng.integers(1, 17))
        d_v = int(rng.integers(1, 17))
        scale = float(rng.choice([0.1, 1.0, 3.0]))
        q = (rng.standard_normal((n, d_k)) * scale).astype(np.float32)
        k = (rng.standard_normal((n, d_k)) * scale).astype(np.float32)
        v = (rng.standard_normal((n, d_v)) * scale).astype(np.float32)
        a, y = kernels.attention(q, k, v, d_k)
        a_ref, y_ref = naive_attention(q, k, v, d_k)
        worst = max(worst,
                    float(np.abs(a - a_ref).max()),
                    float(np.abs(y - y_ref).max()))
    report(3, "attention matches the naive oracle on 120 random instances",
           worst <= 1e-4, f"worst |delta| {worst:.2e} (tol 1e-4)")


# --------------------------------------------------------------------------
# Criterion 4: with the default 12-layer, 64-token encoder on seeded noise,
# the middle layers' contribution distribution is more concentrated (higher
# Gini) than layer 0 in at least 80% of 50 seeded runs.
# --------------------------------------------------------------------------

def test_criterion_4_contribution_concentration_emerges():
    cfg0 = encoder.EncoderConfig()
    assert cfg0.layers == 12 and cfg0.tokens == 64
    lo, hi = cfg0.layers // 4, 3 * cfg0.layers // 4
    wins = 0
    runs = 50
    for seed in range(runs):
        cfg = encoder.EncoderConfig(seed=seed)
        image = encoder.synthetic_image("noise", cfg)
        trace = encoder.forward(image, encoder.init_weights(cfg), cfg)
        profiles = selector.profile_layers(trace)
        middle = float(np.mean([profiles[l].gini for l in range(lo, hi + 1)]))
        if middle > profiles[0].gini:
            wins += 1
    report(4, f"middle layers (l in [{lo}, {hi}]) concentrate harder than layer 0",
           wins >= int(0.8 * runs), f"{wins}/{runs} runs (need >= {int(0.8 * runs)})")


# --------------------------------------------------------------------------
# Criterion 5: roofline model reproduces the reference operating points.
# Assumed context sizes: 576 -> 288 visual tokens for the 13B chat setup and
# 2048 -> 512 for the 7B video setup, plus 35 text tokens each.
# --------------------------------------------------------------------------

def test_criterion_5_cost_model_reference_points():
    a6000 = costmodel.load_hardware("a6000")
    v13 = costmodel.load_model("vicuna-13b")
    v7 = costmodel.load_model("vicuna-7b")
    full13, red13 = 576 + 35, 288 + 35
    full7, red7 = 2048 + 35, 512 + 35

    ops13 = costmodel.prefill_ops(v13, full13)
    a_ok = abs(ops13 - 15.9) / 15.9 <= 0.15

    ratio13 = ops13 / costmodel.prefill_ops(v13, red13)
    ratio_ref = 15.9 / 8.2
    b_ok = abs(ratio13 - ratio_ref) / ratio_ref <= 0.10

    speed13 = costmodel.compare(v13, a6000, full13, red13).speedup
    c_ok = 1.7 <= speed13 <= 2.3

    speed7 = costmodel.compare(v7, a6000, full7, red7).speedup
    d_ok = 3.3 <= speed7 <= 5.5

    int4 = costmodel.quantize(v13, 0.5)
    e_ok = (
        costmodel.prefill_ops(int4, full13) == ops13
        and costmodel.activation_bytes(int4, full13) < costmodel.activation_bytes(v13, full13)
        and costmodel.mem_access_gb(int4, full13) < costmodel.mem_access_gb(v13, full13)
        and costmodel.param_gb(int4) < costmodel.param_gb(v13)
    )

    detail = (f"a: {ops13:.4g}T vs 15.9T; b: ratio {ratio13:.4g} vs {ratio_ref:.4g}; "
              f"c: speedup {speed13:.4g} in [1.7, 2.3]; d: speedup {speed7:.4g} "
              f"in [3.3, 5.5]; e: int4 ops equal, bytes smaller: {e_ok}")
    report(5, "cost model hits all five reference bands",
           a_ok and b_ok and c_ok and d_ok and e_ok, detail)


# --------------------------------------------------------------------------
# Criterion 6: degenerate inputs resolve exactly: a uniform stack keeps the
# k lowest indices per layer with no complementary picks, and an identity
# stack scores every token exactly zero.
# --------------------------------------------------------------------------

def test_criterion_6_degenerate_inputs_exact():
    n, k = 12, 3
    uniform = [uniform_attention(n) for _ in range(4)]
    union, per_layer = selector.select_pivotal(uniform, SelectionConfig(k=k))
    uniform_ok = (
        union.tolist() == list(range(k))
        and all(picks.tolist() == list(range(k)) for picks in per_layer.values())
    )
    res = selector.select_tokens(uniform, SelectionConfig(k=k))
    uniform_ok = uniform_ok and res.complementary.size == 0 and \
        res.selected.tolist() == list(range(k))

    identity = [np.eye(n, dtype=np.float32) for _ in range(4)]
    identity_ok = all(
        np.array_equal(p.r, np.zeros(n)) for p in selector.profile_layers(identity)
    )

    report(6, "uniform and identity attention resolve exactly",
           uniform_ok and identity_ok,
           f"uniform keeps {res.selected.tolist()}, identity r all zero: {identity_ok}")


# --------------------------------------------------------------------------
# Criterion 7: two pipeline runs from one config produce byte-identical
# output trees.
# --------------------------------------------------------------------------

def test_criterion_7_pipeline_byte_determinism(tmp_path):
    doc = {
        "version": 1,
        "input": "noise",
        "outputs": str(tmp_path / "out"),
        "encoder": {"image_size": 16, "patch_size": 4, "channels": 3, "dim": 16,
                    "heads": 4, "layers": 4, "ffn_dim": 16, "seed": 5},
        "selection": {"k": 3},
        "model": "vicuna-7b",
        "hardware": "a6000",
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(doc))

    dirs = [tmp_path / "first", tmp_path / "second"]
    for out_dir in dirs:
        rc = cli.entry(["pipeline", "--config", str(cfg_path),
                        "--out", str(out_dir), "--quiet"])
        assert rc == 0

    def tree(root):
        files = {}
        for base, _, names in os.walk(root):
            for name in names:
                path = os.path.join(base, name)
                files[os.path.relpath(path, root)] = open(path, "rb").read()
        return files

    first, second = tree(dirs[0]), tree(dirs[1])
    same_names = sorted(first) == sorted(second)
    diffs = [name for name in first if first[name] != second.get(name)]
    report(7, "pipeline reruns are byte-identical",
           same_names and not diffs,
           f"{len(first)} files compared, differing: {diffs or 'none'}")


# --------------------------------------------------------------------------
# Criterion 8: 10,000 randomized tensor round-trips are bit-exact, and
# malformed files are rejected with the format error class.
# --------------------------------------------------------------------------

def test_criterion_8_tensor_format_round_trips(tmp_path):
    rng = np.random.default_rng(808)
    path = str(tmp_path / "t.pmtk")
    rounds = 10_000
    for _ in range(rounds):
        rank = int(rng.integers(1, 5))
        shape = tuple(int(rng.integers(1, 5)) for _ in range(rank))
        arr = (rng.standard_normal(shape) *
               float(rng.choice([1e-20, 1e-3, 1.0, 1e4, 1e30]))).astype(np.float32)
        tensorio.write_tensor(arr, path)
        back = tensorio.read_tensor(path)
        assert back.shape == arr.shape
        assert back.dtype == np.float32
        assert back.tobytes() == arr.tobytes()

    truncated = tmp_path / "truncated.pmtk"
    truncated.write_bytes(b"\x00" * 5)
    with pytest.raises(TensorFormatError, match="length mismatch"):
        tensorio.read_tensor(str(truncated))

    wrong_magic = tmp_path / "magic.pmtk"
    good = tensorio.read_tensor(path)  # reuse last payload bytes
    tensorio.write_tensor(good, path)
    blob = bytearray(open(path, "rb").read())
    blob[:4] = b"XXXX"
    wrong_magic.write_bytes(bytes(blob))
    with pytest.raises(TensorFormatError, match="not a tensor file"):
        tensorio.read_tensor(str(wrong_magic))

    nan_payload = tmp_path / "nan.pmtk"
    vec = np.array([1.0, 2.0, 3.0], dtype=np.float32)
    tensorio.write_tensor(vec, str(nan_payload))
    blob = bytearray(open(str(nan_payload), "rb").read())
    blob[-4:] = np.array([np.nan], dtype="<f4").tobytes()
    nan_payload.write_bytes(bytes(blob))
    with pytest.raises(TensorFormatError, match="non-finite value"):
        tensorio.read_tensor(str(nan_payload))

    report(8, f"{rounds} tensor round-trips bit-exact, malformed files rejected",
           True, "3 malformed classes rejected")
