"""File formats: Matrix Market matrices, factored/hierarchical blocks as
small directories, and JSON reports.

Dense matrices travel as Matrix Market array files.  A
:class:`~qbdcr.linalg.LowRankFactor` becomes a directory holding ``U.mtx``,
``sigma.mtx``, ``V.mtx`` and a ``meta.json``; an
:class:`~qbdcr.hodlr.HMatrix` becomes a ``manifest.json`` describing the
tree plus one payload per block in those same formats; a
:class:`~qbdcr.qbd.QbdProblem` is its three blocks plus a descriptor.
Every JSON document carries ``schema_version`` and, when the caller passes
one, the run configuration that produced it.
"""

import json
import os

import numpy as np
import scipy.io as spio

from .hodlr import HMatrix
from .linalg import LowRankFactor, as_matrix, empty_factor
from .qbd import QbdProblem

__all__ = [
    "SCHEMA_VERSION",
    "save_matrix",
    "load_matrix",
    "save_json",
    "load_json",
    "save_lowrank",
    "load_lowrank",
    "save_hmatrix",
    "load_hmatrix",
    "save_problem",
    "load_problem",
]

SCHEMA_VERSION = 1


def save_matrix(path, a, comment=None):
    """Write a dense matrix as Matrix Market array data (17 digits)."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    spio.mmwrite(str(path), a, comment=comment or "", precision=17)
    return str(path)


def load_matrix(path):
    """Read a Matrix Market file into a dense ndarray."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such matrix file: {path}")
    a = spio.mmread(str(path))
    if hasattr(a, "toarray"):
        a = a.toarray()
    return np.asarray(a)


def _with_meta(payload, config=None):
    out = {"schema_version": SCHEMA_VERSION}
    out.update(payload)
    if config is not None:
        out["config"] = dict(config)
    return out


def save_json(path, payload, config=None):
    """Write a JSON report with ``schema_version`` (and optional config)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_with_meta(dict(payload), config), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    return str(path)


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --------------------------------------------------------------- factors

def save_lowrank(dirname, f, config=None):
    """Store a low-rank factor as U/sigma/V Matrix Market files + meta."""
    os.makedirs(dirname, exist_ok=True)
    if f.rank:
        save_matrix(os.path.join(dirname, "U.mtx"), f.U)
        save_matrix(os.path.join(dirname, "sigma.mtx"), f.sigma)
        save_matrix(os.path.join(dirname, "V.mtx"), f.V)
    save_json(os.path.join(dirname, "meta.json"),
              {"kind": "lowrank", "shape": list(f.shape), "rank": f.rank,
               "tol": f.tol}, config)
    return dirname


def load_lowrank(dirname):
    meta = load_json(os.path.join(dirname, "meta.json"))
    if meta.get("kind") != "lowrank":
        raise ValueError(f"{dirname}: not a low-rank factor directory")
    m, n = meta["shape"]
    if meta["rank"] == 0:
        return empty_factor(m, n, meta["tol"])
    u = load_matrix(os.path.join(dirname, "U.mtx"))
    sigma = load_matrix(os.path.join(dirname, "sigma.mtx")).ravel()
    v = load_matrix(os.path.join(dirname, "V.mtx"))
    return LowRankFactor(u, sigma, v, meta["tol"])


# ---------------------------------------------------------- hierarchical

def _describe(h, dirname, blocks):
    if h.is_leaf:
        name = f"leaf{len(blocks):04d}.mtx"
        blocks.append(name)
        save_matrix(os.path.join(dirname, name), h.dense)
        return {"n": h.n, "dense": name}
    low = f"factor{len(blocks):04d}"
    blocks.append(low)
    save_lowrank(os.path.join(dirname, low), h.a21)
    up = f"factor{len(blocks):04d}"
    blocks.append(up)
    save_lowrank(os.path.join(dirname, up), h.a12)
    return {
        "n": h.n,
        "a21": low,
        "a12": up,
        "a11": _describe(h.a11, dirname, blocks),
        "a22": _describe(h.a22, dirname, blocks),
    }


def save_hmatrix(dirname, h, cfg=None, config=None):
    """Store an HODLR matrix as a manifest plus per-block payloads."""
    os.makedirs(dirname, exist_ok=True)
    blocks = []
    tree = _describe(h, dirname, blocks)
    payload = {"kind": "hodlr", "n": h.n, "tree": tree}
    if cfg is not None:
        payload["tol"] = cfg.tol
        payload["leaf_size"] = cfg.leaf_size
        payload["max_rank"] = cfg.max_rank
    with open(os.path.join(dirname, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(_with_meta(payload, config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return dirname


def _rebuild(node, dirname):
    if "dense" in node:
        return HMatrix(node["n"], dense=load_matrix(
            os.path.join(dirname, node["dense"])))
    return HMatrix(
        node["n"],
        a11=_rebuild(node["a11"], dirname),
        a22=_rebuild(node["a22"], dirname),
        a21=load_lowrank(os.path.join(dirname, node["a21"])),
        a12=load_lowrank(os.path.join(dirname, node["a12"])),
    )


def load_hmatrix(dirname):
    manifest = load_json(os.path.join(dirname, "manifest.json"))
    if manifest.get("kind") != "hodlr":
        raise ValueError(f"{dirname}: not an HODLR matrix directory")
    return _rebuild(manifest["tree"], dirname)


# -------------------------------------------------------------- problems

def save_problem(dirname, p, config=None):
    """Store a QBD block triple plus its descriptor in a directory."""
    os.makedirs(dirname, exist_ok=True)
    comment = "" if config is None else "config: " + json.dumps(
        dict(config), sort_keys=True)
    for name, block in zip(("am1", "a0", "a1"), p.blocks):
        save_matrix(os.path.join(dirname, f"{name}.mtx"), block, comment)
    save_json(os.path.join(dirname, "meta.json"),
              {"kind": "qbd", "m": p.m, "band": p.band,
               "qs_rank": p.qs_rank,
               "identity_shifted": p.identity_shifted}, config)
    return dirname


def load_problem(dirname):
    """Load a QBD problem from a directory of three Matrix Market files.

    A ``meta.json`` is optional: without it the blocks are packaged with
    band detection left to validation.
    """
    blocks = [as_matrix(load_matrix(os.path.join(dirname, f"{name}.mtx")),
                        name)
              for name in ("am1", "a0", "a1")]
    meta_path = os.path.join(dirname, "meta.json")
    band = qs_rank = None
    shifted = False
    if os.path.exists(meta_path):
        meta = load_json(meta_path)
        if meta.get("kind") != "qbd":
            raise ValueError(f"{dirname}: not a QBD problem directory")
        band = meta.get("band")
        qs_rank = meta.get("qs_rank")
        shifted = bool(meta.get("identity_shifted", False))
    return QbdProblem(blocks[0], blocks[1], blocks[2], band=band,
                      qs_rank=qs_rank, identity_shifted=shifted)
