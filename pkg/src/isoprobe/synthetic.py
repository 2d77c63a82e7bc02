"""Seeded synthetic dumps with planted geometry, used by tests and experiment scripts.

Every generator is a pure function of its arguments; the same seed always yields a
bit-identical dump.
"""

from __future__ import annotations

import numpy as np

from isoprobe.store import EmbeddingDump, StsDataset, TokenRecord


def cross_matrix(a: float = 2.0, b: float = 1.0) -> np.ndarray:
    """Rows (+-a, 0), (0, +-b)."""
    return np.array([[a, 0.0], [-a, 0.0], [0.0, b], [0.0, -b]])


def anisotropic_gaussian(n: int, d: int, scale: float = 10.0, seed: int = 0) -> np.ndarray:
    """Standard normal sample with the first coordinate stretched by ``scale``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    x[:, 0] *= scale
    return x


def random_rotation(d: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def dump_from_matrix(m, layer: int = 0, frequencies=None) -> EmbeddingDump:
    """One-token-per-sentence dump wrapping the rows of ``m``."""
    m = np.asarray(m, dtype=np.float64)
    if frequencies is None:
        frequencies = [0] * len(m)
    records = tuple(
        TokenRecord(f"t{i}", layer, i, 0, False, True, int(f)) for i, f in enumerate(frequencies)
    )
    return EmbeddingDump(m.shape[1], records, m)


def zipf_frequencies(n: int, scale: float = 1e9, exponent: float = 1.0) -> np.ndarray:
    """Rank-frequency law ``round(scale / r**exponent)`` for ranks 1..n (distinct for n <= 1e4)."""
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return np.rint(scale / ranks**exponent).astype(np.int64)


def _sentence_dump(sentence_vectors, n_tokens, token_noise, rng, layer=0):
    """Tokens = [CLS] + ``n_tokens`` poolable word tokens around each sentence vector.

    ``token_noise(rng, n)`` draws the per-token perturbations. The [CLS] row is not
    poolable.
    """
    n_sent, d = sentence_vectors.shape
    records = []
    rows = []
    for sid in range(n_sent):
        records.append(TokenRecord("[CLS]", layer, sid, 0, True, False, 0))
        rows.append(sentence_vectors[sid] + token_noise(rng, 1)[0])
        noise = token_noise(rng, n_tokens)
        for p in range(n_tokens):
            records.append(TokenRecord(f"w{sid}_{p}", layer, sid, p + 1, False, True, 0))
            rows.append(sentence_vectors[sid] + noise[p])
    return EmbeddingDump(d, tuple(records), np.vstack(rows))


def _paired_latents(rng, n_pairs, k):
    """Latent pairs with controlled angle; gold = 5 * (1 + cos) / 2 of the latent angle."""
    a = rng.standard_normal((n_pairs, k))
    fresh = rng.standard_normal((n_pairs, k))
    t = rng.uniform(0.0, 1.0, n_pairs)
    b = np.sqrt(t)[:, None] * a + np.sqrt(1.0 - t)[:, None] * fresh
    cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    gold = np.clip(2.5 * (1.0 + cos), 0.0, 5.0)
    latents = np.empty((2 * n_pairs, k))
    latents[0::2] = a
    latents[1::2] = b
    pairs = tuple((2 * i, 2 * i + 1, float(g)) for i, g in enumerate(gold))
    return latents, StsDataset(pairs)


def planted_sts(
    kind: str,
    n_pairs: int = 300,
    d: int = 64,
    n_dominant: int = 12,
    n_tokens: int = 8,
    dominant_scale: float = 8.0,
    seed: int = 0,
) -> tuple[EmbeddingDump, StsDataset]:
    """STS fixture whose semantic signal sits outside (``"A"``) or inside (``"B"``)
    the dominant directions.

    The space is split into ``n_dominant`` high-variance axes and ``d - n_dominant``
    remaining axes, then randomly rotated.

    * ``A``: sentence latents live on the remaining axes. Every token also carries an
      independent large draw (std ``dominant_scale``) plus a shared offset on the
      dominant axes: nuisance that survives pooling and masks the signal.
    * ``B``: sentence latents are scaled by ``dominant_scale`` and placed on the
      dominant axes; the remaining axes hold only unit token noise.

    Gold scores are a monotone function of the latent cosine of each pair.
    """
    if kind not in ("A", "B"):
        raise ValueError(f"kind must be 'A' or 'B', got {kind!r}")
    rng = np.random.default_rng(seed)
    rest = d - n_dominant
    rotation = random_rotation(d, rng)
    if kind == "A":
        latents, dataset = _paired_latents(rng, n_pairs, rest)
        sentence = np.zeros((2 * n_pairs, d))
        sentence[:, n_dominant:] = latents
        offset = dominant_scale * rng.standard_normal(n_dominant)

        def noise(r, n):
            out = np.zeros((n, d))
            out[:, :n_dominant] = offset + dominant_scale * r.standard_normal((n, n_dominant))
            out[:, n_dominant:] = 0.5 * r.standard_normal((n, rest))
            return out

    else:
        latents, dataset = _paired_latents(rng, n_pairs, n_dominant)
        sentence = np.zeros((2 * n_pairs, d))
        sentence[:, :n_dominant] = dominant_scale * latents

        def noise(r, n):
            out = np.zeros((n, d))
            out[:, :n_dominant] = 0.5 * r.standard_normal((n, n_dominant))
            out[:, n_dominant:] = r.standard_normal((n, rest))
            return out

    dump = _sentence_dump(sentence, n_tokens, noise, rng)
    return dump.with_vectors(dump.vectors @ rotation.T), dataset


def layered_dump(
    n_layers: int = 6,
    n_sentences: int = 60,
    n_tokens: int = 10,
    d: int = 16,
    seed: int = 0,
) -> EmbeddingDump:
    """Multi-layer dump whose anisotropy grows with depth.

    Layer ``l`` word tokens are standard normal with the first axis stretched by
    ``1 + 0.4 * l``. [CLS] rows form a tight cluster (std 0.3, 0.9 along the first
    axis) around a shared offset ``(2 + 1.5 * l)`` on that axis, so their cloud is
    both displaced and elongated.
    """
    rng = np.random.default_rng(seed)
    records = []
    rows = []
    for layer in range(n_layers):
        stretch = np.ones(d)
        stretch[0] = 1.0 + 0.4 * layer
        cls_offset = np.zeros(d)
        cls_offset[0] = 2.0 + 1.5 * layer
        cls_spread = np.full(d, 0.3)
        cls_spread[0] = 0.9
        for sid in range(n_sentences):
            records.append(TokenRecord("[CLS]", layer, sid, 0, True, False, 0))
            rows.append(cls_offset + cls_spread * rng.standard_normal(d))
            for p in range(1, n_tokens + 1):
                records.append(TokenRecord(f"w{sid}_{p}", layer, sid, p, False, True, 0))
                rows.append(stretch * rng.standard_normal(d))
    return EmbeddingDump(d, tuple(records), np.vstack(rows))
