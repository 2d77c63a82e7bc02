"""Acceptance suite: one test per criterion, each tagged with ``criterion(n, title)``.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from isoprobe.cli import main
from isoprobe.evaluation import evaluate, spearman
from isoprobe.geometry import isotropy_score, spectral_decomposition
from isoprobe.store import (
    EmbeddingDump,
    TokenRecord,
    load_binary_dump,
    write_binary_dump,
    write_sts_dataset,
)
from isoprobe.synthetic import cross_matrix, dump_from_matrix, layered_dump, planted_sts, random_rotation
from isoprobe.transforms import cluster_based, clustering_zm, global_abtt, kmeans, zero_mean
from oracles import (
    best_partition,
    brute_spearman,
    canonical_partition,
    mp_isotropy_logs,
    naive_isotropy,
)

criterion = pytest.mark.criterion


def random_instance(rng, n_max=50, d_max=8):
    # N >= d + 2 keeps the covariance full rank; with a null space the eigenbasis (and so
    # the candidate set) is not unique and no basis-free oracle exists
    d = int(rng.integers(1, d_max + 1))
    n = int(rng.integers(d + 2, n_max + 1))
    scales = rng.uniform(0.1, 3.0, d)
    return rng.standard_normal((n, d)) * scales + rng.normal(0, 1, d)


@criterion(1, "isotropy matches brute-force oracle on 50 random matrices")
def test_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(50):
        m = random_instance(rng)
        ours = isotropy_score(m).isotropy
        ref = naive_isotropy(m)
        assert abs(ours - ref) <= 1e-9 * ref, (m.shape, ours, ref)
    assert time.perf_counter() - start < 10.0


@criterion(2, "hand-computed cross fixtures")
def test_cross_fixtures():
    assert isotropy_score(cross_matrix(2.0, 1.0)).isotropy == pytest.approx(0.53401, abs=1e-4)
    assert isotropy_score(cross_matrix(1.0, 1.0)).isotropy == pytest.approx(1.0, abs=1e-9)


@criterion(3, "rotation invariance on N=500, d=16")
def test_rotation_invariance():
    rng = np.random.default_rng(11)
    m = rng.standard_normal((500, 16)) * np.linspace(0.3, 2.0, 16)
    base = isotropy_score(m).isotropy
    for _ in range(20):
        q = random_rotation(16, rng)
        assert abs(isotropy_score(m @ q).isotropy - base) <= 1e-6


@criterion(4, "overflow robustness with row norms ~1e4")
def test_overflow_robustness():
    rng = np.random.default_rng(4)
    d = 8
    # one +-s_j e_j pair per axis; s_j = 1e4 (1 + 1e-4 j) keeps I around 1e-3
    scales = 1e4 * (1.0 + 1e-4 * np.arange(d))
    m = np.vstack([np.diag(scales), -np.diag(scales)]) + rng.normal(0.0, 1e-2, (2 * d, d))
    assert np.linalg.norm(m, axis=1).min() > 9e3
    with pytest.raises(OverflowError):
        math.exp(float(m[0, 0]))
    with np.errstate(over="raise", invalid="raise"):
        rep = isotropy_score(m)
    assert math.isfinite(rep.isotropy) and rep.isotropy > 0.0
    lo, hi = mp_isotropy_logs(m)
    assert rep.log_f_min == pytest.approx(float(lo), rel=1e-6)
    assert rep.log_f_max == pytest.approx(float(hi), rel=1e-6)
    assert rep.isotropy == pytest.approx(math.exp(float(lo - hi)), rel=1e-6)


@criterion(5, "global_abtt postconditions")
def test_abtt_postconditions():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(30, 200))
        d = int(rng.integers(3, 20))
        D = int(rng.integers(1, d))
        m = rng.standard_normal((n, d)) * rng.uniform(0.1, 10.0, d) + rng.normal(0, 5, d)
        out = global_abtt(m, D)
        removed = spectral_decomposition(m).eigenvectors[:D]
        assert np.abs(out @ removed.T).max() <= 1e-8
        vals = spectral_decomposition(out).eigenvalues
        assert (vals[d - D :] <= 1e-10 * vals[0]).all()


@criterion(6, "pipeline identities on 20 instances")
def test_pipeline_identities():
    rng = np.random.default_rng(6)
    for _ in range(20):
        n = int(rng.integers(20, 120))
        d = int(rng.integers(2, 12))
        m = rng.standard_normal((n, d)) * rng.uniform(0.2, 4.0, d) + rng.normal(0, 3, d)
        D = int(rng.integers(0, d))
        k = int(rng.integers(1, 6))
        seed = int(rng.integers(0, 2**31))
        assert np.abs(cluster_based(m, k=1, D=D, seed=seed) - global_abtt(m, D)).max() <= 1e-10
        assert np.abs(cluster_based(m, k=k, D=0, seed=seed) - clustering_zm(m, k, seed)).max() <= 1e-10
        assert np.abs(global_abtt(m, 0) - zero_mean(m)).max() <= 1e-10


@criterion(7, "Spearman matches brute-force rank oracle")
def test_spearman_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 100:
        n = int(rng.integers(2, 201))
        levels = int(rng.integers(2, 12))
        x = rng.integers(0, levels, n).astype(float)
        y = rng.integers(0, levels, n) + rng.choice([0.0, 0.5], n)
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert abs(spearman(x, y) - brute_spearman(x, y)) <= 1e-12
        checked += 1
    assert spearman([1, 1, 2], [1, 2, 3]) == pytest.approx(0.866025, abs=1e-6)


@criterion(8, "k-means monotone inertia and exhaustive optimum")
def test_kmeans():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(10, 300))
        m = rng.standard_normal((n, 4)) * rng.uniform(0.5, 3.0, 4)
        res = kmeans(m, int(rng.integers(2, 9)), seed=int(rng.integers(0, 1000)), debug=True)
        assert all(b <= a for a, b in zip(res.inertia_history, res.inertia_history[1:]))
        assert res.inertia <= res.inertia_history[-1]
    blobs = np.array([[0.0, 0.0], [0.0, 1.0], [5.0, 5.0], [5.0, 6.0]])
    best_sse, best_labels = best_partition(blobs, 2)
    res = kmeans(blobs, 2, seed=0)
    assert canonical_partition(res.labels) == canonical_partition(best_labels)
    assert res.inertia == pytest.approx(best_sse, abs=1e-12)


@criterion(9, "planted STS dumps reproduce the help/hurt structure")
def test_planted_sts():
    abtt = [{"op": "global_abtt", "params": {"D": 12}}]
    rho = {}
    for kind in ("A", "B"):
        dump, ds = planted_sts(kind, seed=0)
        for name, pipe in (("baseline", None), ("global_abtt", abtt)):
            start = time.perf_counter()
            rho[kind, name] = evaluate(dump, ds, 0, pipe).spearman_rho
            assert time.perf_counter() - start < 30.0
    print(rho)
    assert rho["A", "global_abtt"] > rho["A", "baseline"]
    assert rho["B", "global_abtt"] < rho["B", "baseline"]


@criterion(10, "layer report: rising anisotropy, [CLS] above all tokens")
def test_layer_curve(tmp_path, capsys):
    path = tmp_path / "layers.bin"
    write_binary_dump(layered_dump(n_layers=6, seed=0), path)
    assert main(["layers", "--input", str(path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "layer,scope,isotropy,neg_ln_isotropy,neg_log10_isotropy"
    table = {}
    for line in lines[1:]:
        layer, scope, _, neg_ln, _ = line.split(",")
        table[int(layer), scope] = float(neg_ln)
    curve = [table[layer, "all"] for layer in range(6)]
    assert all(b > a for a, b in zip(curve, curve[1:])), curve
    assert all(table[layer, "cls"] > table[layer, "all"] for layer in range(6))


def cli(*args, threads):
    proc = subprocess.run(
        [sys.executable, "-m", "isoprobe", *map(str, args), "--threads", str(threads)],
        capture_output=True,
        check=False,
    )
    assert proc.returncode == 0, proc.stderr.decode()
    return proc.stdout


@criterion(11, "determinism across runs and thread counts; bit-exact binary round-trip")
def test_determinism(tmp_path):
    dump, ds = planted_sts("A", n_pairs=150, d=64, seed=1)
    src = tmp_path / "in.bin"
    write_binary_dump(dump, src)
    write_sts_dataset(ds, tmp_path / "sts.csv")
    pipe = tmp_path / "pipe.json"
    pipe.write_text(json.dumps([{"op": "cluster_based", "params": {"k": 5, "D": 3}}]))

    commands = {
        "measure": ["measure", "--input", src],
        "cluster": ["cluster", "--input", src, "--k", 7],
        "eval": ["eval", "--input", src, "--sts", tmp_path / "sts.csv", "--pipeline", pipe],
        "layers": ["layers", "--input", src],
        "project": ["project", "--input", src, "--unknown-zero"],
    }
    for name, args in commands.items():
        outputs = [cli(*args, threads=t) for t in (1, 1, 8)]
        assert outputs[0] and outputs[0] == outputs[1] == outputs[2], name

    blobs = []
    for run, t in enumerate((1, 1, 8)):
        out = tmp_path / f"t{run}.bin"
        cli("transform", "--input", src, "--pipeline", pipe, "--output", out, threads=t)
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]

    rng = np.random.default_rng(11)
    vectors = rng.standard_normal((1000, 768)) * 10.0 ** rng.integers(-300, 300, (1000, 768))
    records = tuple(
        TokenRecord(f"tok{i}", i % 3, i // 10, i % 10, i % 10 == 0, i % 10 != 0, i * 7)
        for i in range(1000)
    )
    original = EmbeddingDump(768, records, vectors)
    write_binary_dump(original, tmp_path / "rt.bin")
    loaded = load_binary_dump(tmp_path / "rt.bin")
    assert loaded.records == original.records
    assert loaded.vectors.tobytes() == original.vectors.tobytes()


@criterion(12, "measure on 50000 x 768 through the CLI within 2 minutes")
@pytest.mark.slow
def test_scale(tmp_path):
    rng = np.random.default_rng(12)
    m = rng.standard_normal((50_000, 768), dtype=np.float64) * 0.05
    path = tmp_path / "big.bin"
    write_binary_dump(dump_from_matrix(m), path)
    del m
    start = time.perf_counter()
    out = cli("measure", "--input", path, threads=os.cpu_count() or 1)
    elapsed = time.perf_counter() - start
    print(f"measure 50000x768: {elapsed:.1f} s")
    report = json.loads(out)
    assert report["n_vectors"] == 50_000 and 0.0 < report["isotropy"] <= 1.0
    assert elapsed < 120.0
