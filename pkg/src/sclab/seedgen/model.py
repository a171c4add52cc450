"""Toy center + offset seed generator with constraint cross-attention.

Every spatial input to a learned layer is relative: to the partial scan's
centroid, to a k-NN centroid, or to a neighbour. The absolute centroid is
added back only where coordinates leave the network, so translating the
scan and constraints translates every predicted point by the same vector.

Tensors carry a leading batch axis; the single-object helpers wrap a batch
of one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sclab.constraints import ConstraintSet
from sclab.geometry.kdtree import KDTree
from sclab.geometry.sampling import farthest_point_sample
from sclab.geometry.types import OrientedPointCloud
from sclab.seedgen import autodiff as ad
from sclab.seedgen.autodiff import Tensor

ENCODER_INPUT = 9  # k-NN-relative xyz, centroid-relative xyz, normal


@dataclass(frozen=True)
class SeedGenConfig:
    m_l: int = 32
    c: int = 64
    c_seed: int = 64
    heads: int = 4
    upsample_layers: int = 3
    k_encoder: int = 8
    k_upsample: int = 4

    def __post_init__(self):
        if self.upsample_layers != 3:
            raise ValueError("the doubling schedule needs exactly 3 upsampling layers")
        if self.c % self.heads:
            raise ValueError("c must be divisible by heads")
        if min(self.m_l, self.c, self.c_seed, self.k_encoder, self.k_upsample) < 1:
            raise ValueError("sizes must be positive")

    @property
    def m_seed(self) -> int:
        return 2 * self.m_l

    @property
    def m_dense(self) -> int:
        return self.m_seed * 2 ** self.upsample_layers

    @property
    def level_sizes(self) -> list[int]:
        return [self.m_seed * 2 ** j for j in range(self.upsample_layers + 1)]


# -- parameters ------------------------------------------------------------------

def _layer_shapes(cfg: SeedGenConfig) -> list[tuple[str, int, int]]:
    c, cs = cfg.c, cfg.c_seed
    layers = [
        ("enc.mlp1", ENCODER_INPUT, c), ("enc.mlp2", c, c),
        ("enc.glob1", c, c), ("enc.glob2", c, c),
        ("pe.1", 3, c), ("pe.2", c, c),
        ("theta.1", 2 * c, c), ("theta.2", c, 3),
        ("split.a", c, c), ("split.b", c, c),
        ("omega.1", c, c), ("omega.2", c, cs),
        ("gamma.1", cs + 2 * c, c), ("gamma.2", c, 3),
        ("normal.1", c + 3, c), ("normal.2", c, 3),
    ]
    for blk in ("sa", "seed_sa"):
        layers += [(f"{blk}.{n}", c, c) for n in ("q", "k", "v", "o", "ffn1", "ffn2")]
    layers += [(f"ca.{n}", c, c) for n in ("q", "k", "v", "o")]
    for j in range(1, cfg.upsample_layers + 1):
        c_in = cs if j == 1 else c
        layers += [(f"up{j}.in", c_in + 6, c), (f"up{j}.split.a", c, c), (f"up{j}.split.b", c, c),
                   (f"up{j}.off1", c, c), (f"up{j}.off2", c, 3)]
        layers += [(f"up{j}.att.{n}", c, c) for n in ("q", "k", "v", "o")]
    return layers


@dataclass
class SeedGenParams:
    tensors: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def init(cls, cfg: SeedGenConfig, seed: int = 0) -> "SeedGenParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
        rng = np.random.default_rng(seed)
        t: dict[str, Tensor] = {}
        for name in ("o_token", "e_free", "e_occ"):
            t[name] = Tensor(rng.uniform(-1, 1, cfg.c) / np.sqrt(cfg.c), name=name)
        for name, fan_in, fan_out in _layer_shapes(cfg):
            lim = 1.0 / np.sqrt(fan_in)
            t[name + ".W"] = Tensor(rng.uniform(-lim, lim, (fan_in, fan_out)), name=name + ".W")
            t[name + ".b"] = Tensor(rng.uniform(-lim, lim, fan_out), name=name + ".b")
        return cls(t)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def zero_grad(self) -> None:
        for p in self.tensors.values():
            p.zero_grad()

    def copy(self) -> "SeedGenParams":
        return SeedGenParams({k: Tensor(v.data.copy(), name=k) for k, v in self.tensors.items()})

    def n_values(self) -> int:
        return int(sum(p.data.size for p in self.tensors.values()))

    def save(self, path) -> tuple[Path, Path]:
        """Flat little-endian float64 blob plus ``<path>.json`` manifest."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        manifest, blobs, offset = [], [], 0
        for name, p in self.tensors.items():
            manifest.append({"name": name, "shape": list(p.shape), "offset": offset})
            blobs.append(p.data.astype("<f8").reshape(-1))
            offset += p.data.size
        path.write_bytes(np.concatenate(blobs).tobytes())
        meta = path.with_name(path.name + ".json")
        meta.write_text(json.dumps({"dtype": "<f8", "tensors": manifest}, indent=2) + "\n")
        return path, meta

    @classmethod
    def load(cls, path) -> "SeedGenParams":
        path = Path(path)
        meta = json.loads(path.with_name(path.name + ".json").read_text())
        flat = np.frombuffer(path.read_bytes(), dtype="<f8")
        t = {}
        for e in meta["tensors"]:
            n = int(np.prod(e["shape"]))
            t[e["name"]] = Tensor(flat[e["offset"]:e["offset"] + n].reshape(e["shape"]).copy(), name=e["name"])
        return cls(t)


# -- building blocks ---------------------------------------------------------------

def linear(x, p: SeedGenParams, name: str) -> Tensor:
    return ad.matmul(x, p[name + ".W"]) + p[name + ".b"]


def mlp2(x, p: SeedGenParams, n1: str, n2: str) -> Tensor:
    return linear(ad.gelu(linear(x, p, n1)), p, n2)


def attention(xq, xkv, p: SeedGenParams, name: str, heads: int, mask=None) -> Tensor:
    """Multi-head attention; ``mask`` (B, m) marks valid keys."""
    B, n, c = xq.shape
    m = xkv.shape[1]
    d = c // heads

    def split_heads(t, rows):
        return ad.transpose(ad.reshape(t, (B, rows, heads, d)), (0, 2, 1, 3))

    q = split_heads(ad.matmul(xq, p[name + ".q.W"]) + p[name + ".q.b"], n)
    k = split_heads(ad.matmul(xkv, p[name + ".k.W"]) + p[name + ".k.b"], m)
    v = split_heads(ad.matmul(xkv, p[name + ".v.W"]) + p[name + ".v.b"], m)
    scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(d))
    w = ad.softmax(scores, axis=-1, mask=None if mask is None else mask[:, None, None, :])
    out = ad.reshape(ad.transpose(ad.matmul(w, v), (0, 2, 1, 3)), (B, n, c))
    return linear(out, p, name + ".o")


def self_attention_block(x, p: SeedGenParams, name: str, heads: int) -> Tensor:
    h = ad.layernorm(x)
    x = x + attention(h, h, p, name, heads)
    return x + mlp2(ad.layernorm(x), p, name + ".ffn1", name + ".ffn2")


def split2(x, p: SeedGenParams, name: str) -> Tensor:
    """Stride-2 transposed filter on a set: each row emits two rows."""
    return ad.interleave(linear(x, p, name + ".a"), linear(x, p, name + ".b"))


def _knn_batch(coords: np.ndarray, k: int) -> np.ndarray:
    """(B, n, 3) -> (B, n, k) neighbour indices, self included, ties by index."""
    k = min(k, coords.shape[1])
    return np.stack([KDTree(c).query_knn(c, k)[0] for c in coords])


# -- inputs ---------------------------------------------------------------------------

@dataclass
class ObjectInputs:
    """Network inputs for a batch; every array has a leading batch axis."""
    centroid: np.ndarray      # (B, 3)
    points: np.ndarray        # (B, m_l, 3) downsampled partial, absolute
    features: np.ndarray      # (B, m_l, 9)
    cons: np.ndarray          # (B, K, 3) constraint points relative to centroid
    cons_occ: np.ndarray      # (B, K) 1.0 for occupied-space points
    cons_mask: np.ndarray     # (B, K) valid entries
    has_cons: np.ndarray      # (B,)

    def __len__(self) -> int:
        return len(self.centroid)


def object_inputs(scan: OrientedPointCloud, constraints: ConstraintSet | None,
                  cfg: SeedGenConfig) -> ObjectInputs:
    """Downsample, build relative encoder features, and center the constraints."""
    pts = scan.points
    if len(pts) < cfg.m_l:
        raise ValueError(f"object scan has {len(pts)} points, need at least m_l={cfg.m_l}")
    k = min(cfg.k_encoder, len(pts))
    centroid = pts.mean(axis=0)
    sel = farthest_point_sample(pts, cfg.m_l)
    nbr, _ = KDTree(pts).query_knn(pts[sel], k)
    # mean of differences, so the result does not depend on where the object sits
    local = (pts[sel][:, None, :] - pts[nbr]).mean(axis=1)
    rel = (pts[sel][:, None, :] - pts[None, :, :]).mean(axis=1)
    feats = np.concatenate([local, rel, scan.normals[sel]], axis=1)
    if constraints is None:
        constraints = ConstraintSet.empty()
    cons = np.concatenate([constraints.free_points - centroid, constraints.occ_points - centroid])
    occ = np.r_[np.zeros(len(constraints.free_points)), np.ones(len(constraints.occ_points))]
    return ObjectInputs(centroid[None], pts[sel][None], feats[None], cons[None], occ[None],
                        np.ones((1, len(cons)), dtype=bool), np.array([len(cons) > 0]))


def stack_inputs(items: list[ObjectInputs]) -> ObjectInputs:
    """Batch single-object inputs, padding constraint sets to a common length."""
    kmax = max(1, max(it.cons.shape[1] for it in items))
    B = len(items)
    cons = np.zeros((B, kmax, 3))
    occ = np.zeros((B, kmax))
    mask = np.zeros((B, kmax), dtype=bool)
    for b, it in enumerate(items):
        n = it.cons.shape[1]
        cons[b, :n], occ[b, :n], mask[b, :n] = it.cons[0], it.cons_occ[0], True
    return ObjectInputs(np.concatenate([it.centroid for it in items]),
                        np.concatenate([it.points for it in items]),
                        np.concatenate([it.features for it in items]),
                        cons, occ, mask, np.concatenate([it.has_cons for it in items]))


# -- network stages ------------------------------------------------------------------------

def encode(inp: ObjectInputs, p: SeedGenParams) -> tuple[Tensor, Tensor]:
    """(F_p (B, m_l, c), f_p (B, c))."""
    f = mlp2(inp.features, p, "enc.mlp1", "enc.mlp2")
    g = ad.tmax(mlp2(ad.gelu(f), p, "enc.glob1", "enc.glob2"), axis=1)
    return f, g


def cross_attend(tokens, inp: ObjectInputs, p: SeedGenParams, cfg: SeedGenConfig) -> Tensor | None:
    """Constraint contribution for every token; None when no object has constraints."""
    if not inp.has_cons.any():
        return None
    pe = mlp2(inp.cons, p, "pe.1", "pe.2")
    occ = inp.cons_occ[..., None]
    kv = pe + ad.mul(1.0 - occ, p["e_free"]) + ad.mul(occ, p["e_occ"])
    mask = inp.cons_mask.copy()
    mask[~inp.has_cons, 0] = True  # keep the softmax finite; the row is zeroed below
    out = attention(ad.layernorm(tokens), kv, p, "ca", cfg.heads, mask)
    if not inp.has_cons.all():
        out = ad.mul(out, inp.has_cons.astype(np.float64)[:, None, None])
    return out


@dataclass
class Seeds:
    O: Tensor        # (B, 3)
    S: Tensor        # (B, m_seed, 3)
    F_seed: Tensor   # (B, m_seed, c_seed)
    o_obj: Tensor    # (B, c)
    f_p: Tensor      # (B, c)


def seeds_from_encoding(F_p: Tensor, f_p: Tensor, inp: ObjectInputs, p: SeedGenParams,
                        cfg: SeedGenConfig) -> Seeds:
    B = F_p.shape[0]
    token = ad.mul(np.ones((B, 1, 1)), ad.reshape(p["o_token"], (1, 1, cfg.c)))
    x = self_attention_block(ad.concat([token, F_p], axis=1), p, "sa", cfg.heads)
    scene = cross_attend(x, inp, p, cfg)
    if scene is not None:
        x = x + scene
    o_obj = x[:, 0, :]
    F_obj = x[:, 1:, :]
    O = mlp2(ad.concat([o_obj, f_p], axis=1), p, "theta.1", "theta.2") + inp.centroid
    F = self_attention_block(split2(F_obj, p, "split"), p, "seed_sa", cfg.heads)
    F_seed = mlp2(F, p, "omega.1", "omega.2")
    ctx = ad.mul(np.ones((1, cfg.m_seed, 1)), ad.reshape(ad.concat([o_obj, f_p], axis=1), (B, 1, 2 * cfg.c)))
    offsets = mlp2(ad.concat([F_seed, ctx], axis=2), p, "gamma.1", "gamma.2")
    S = ad.reshape(O, (B, 1, 3)) + offsets
    return Seeds(O, S, F_seed, o_obj, f_p)


def upsample_layer(coords: Tensor, feats: Tensor, O: Tensor, p: SeedGenParams, j: int,
                   cfg: SeedGenConfig, knn: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Double the point count: children = parent + predicted offset.

    ``knn`` overrides the neighbour lookup (used to hold selections fixed).
    """
    B, n, _ = coords.shape
    idx = _knn_batch(coords.data, cfg.k_upsample) if knn is None else knn
    local = ad.mean(ad.gather_rows(coords, idx) - ad.reshape(coords, (B, n, 1, 3)), axis=2)
    rel = coords - ad.reshape(O, (B, 1, 3))
    h = linear(ad.concat([feats, rel, local], axis=2), p, f"up{j}.in")
    h = h + attention(ad.layernorm(h), ad.layernorm(h), p, f"up{j}.att", cfg.heads)
    child = ad.gelu(split2(h, p, f"up{j}.split"))
    offsets = mlp2(child, p, f"up{j}.off1", f"up{j}.off2")
    return ad.repeat_rows(coords, 2) + offsets, child


def normals_head(coords: Tensor, feats: Tensor, O: Tensor, p: SeedGenParams) -> Tensor:
    B, n, _ = coords.shape
    rel = coords - ad.reshape(O, (B, 1, 3))
    return ad.normalize(mlp2(ad.concat([feats, rel], axis=2), p, "normal.1", "normal.2"))


@dataclass
class Prediction:
    seeds: Seeds
    levels: list[Tensor]   # C^0 = S, ..., C^3
    normals: Tensor

    def outputs(self) -> list[Tensor]:
        return [self.seeds.O] + self.levels + [self.normals]


def forward(inp: ObjectInputs, p: SeedGenParams, cfg: SeedGenConfig,
            selections: dict | None = None) -> Prediction:
    """Full pass. If ``selections`` is given, k-NN lookups are read from it
    when present and recorded into it otherwise."""
    F_p, f_p = encode(inp, p)
    seeds = seeds_from_encoding(F_p, f_p, inp, p, cfg)
    coords, feats = seeds.S, seeds.F_seed
    levels = [coords]
    for j in range(1, cfg.upsample_layers + 1):
        knn = None
        if selections is not None:
            knn = selections.setdefault(f"up{j}", _knn_batch(coords.data, cfg.k_upsample))
        coords, feats = upsample_layer(coords, feats, seeds.O, p, j, cfg, knn)
        levels.append(coords)
    return Prediction(seeds, levels, normals_head(coords, feats, seeds.O, p))


# -- single-object API -----------------------------------------------------------------------

@dataclass
class SeedSet:
    O: np.ndarray
    S: np.ndarray
    F_seed: np.ndarray

    def __len__(self) -> int:
        return len(self.S)


@dataclass
class Encoded:
    inputs: ObjectInputs
    F_p: Tensor
    f_p: Tensor

    @property
    def points(self) -> np.ndarray:
        return self.inputs.points[0]

    @property
    def features(self) -> np.ndarray:
        return self.F_p.data[0]

    @property
    def global_feature(self) -> np.ndarray:
        return self.f_p.data[0]


def encode_partial(object_scan: OrientedPointCloud, cfg: SeedGenConfig, params: SeedGenParams,
                   constraints: ConstraintSet | None = None) -> Encoded:
    """Encode one object scan. ``points``, ``features`` and ``global_feature`` give
    P^l (m_l, 3), F_p^l (m_l, c) and f_p (c,)."""
    inp = object_inputs(object_scan, constraints, cfg)
    F_p, f_p = encode(inp, params)
    return Encoded(inp, F_p, f_p)


def attend_constraints(F_obj_in, constraints: ConstraintSet, params: SeedGenParams,
                       cfg: SeedGenConfig) -> tuple[np.ndarray, np.ndarray]:
    """Cross-attention of tokens (row 0 is the object token) to constraint
    points already expressed relative to the object centroid.
    Returns (F_scene (n-1, c), o_scene (c,)); zeros for an empty set."""
    x = np.asarray(F_obj_in.data if isinstance(F_obj_in, Tensor) else F_obj_in, dtype=np.float64)
    cons = np.concatenate([constraints.free_points, constraints.occ_points])
    occ = np.r_[np.zeros(len(constraints.free_points)), np.ones(len(constraints.occ_points))]
    inp = ObjectInputs(np.zeros((1, 3)), np.zeros((1, 0, 3)), np.zeros((1, 0, ENCODER_INPUT)),
                       cons[None], occ[None], np.ones((1, len(cons)), dtype=bool), np.array([len(cons) > 0]))
    out = cross_attend(Tensor(x[None]), inp, params, cfg)
    if out is None:
        return np.zeros((len(x) - 1, x.shape[1])), np.zeros(x.shape[1])
    return out.data[0, 1:], out.data[0, 0]


def generate_seeds(encoded: Encoded, params: SeedGenParams, cfg: SeedGenConfig) -> SeedSet:
    s = seeds_from_encoding(encoded.F_p, encoded.f_p, encoded.inputs, params, cfg)
    return SeedSet(s.O.data[0], s.S.data[0], s.F_seed.data[0])


def upsample(coords, feats, center, params: SeedGenParams, j: int, cfg: SeedGenConfig
             ) -> tuple[np.ndarray, np.ndarray]:
    if j not in range(1, cfg.upsample_layers + 1):
        raise ValueError(f"layer index must be in 1..{cfg.upsample_layers}")
    c2, f2 = upsample_layer(Tensor(np.asarray(coords)[None]), Tensor(np.asarray(feats)[None]),
                            Tensor(np.asarray(center, dtype=np.float64)[None]), params, j, cfg)
    return c2.data[0], f2.data[0]


def predict_normals(coords, feats, center, params: SeedGenParams) -> np.ndarray:
    return normals_head(Tensor(np.asarray(coords)[None]), Tensor(np.asarray(feats)[None]),
                        Tensor(np.asarray(center, dtype=np.float64)[None]), params).data[0]


@dataclass
class Completion:
    center: np.ndarray
    levels: list[np.ndarray]
    normals: np.ndarray
    seeds: SeedSet


def complete(object_scan: OrientedPointCloud, constraints: ConstraintSet | None,
             params: SeedGenParams, cfg: SeedGenConfig) -> Completion:
    """Full forward pass for one object; constraints are in world coordinates."""
    pred = forward(object_inputs(object_scan, constraints, cfg), params, cfg)
    s = pred.seeds
    return Completion(s.O.data[0], [lv.data[0] for lv in pred.levels], pred.normals.data[0],
                      SeedSet(s.O.data[0], s.S.data[0], s.F_seed.data[0]))
