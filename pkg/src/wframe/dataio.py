"""Datasets, image IO, synthetic generators, checkpoints, and exports.

Checkpoints are JSON documents holding every piece of run state needed to
continue bit-exactly: kernels, weights, chain values, all RNG stream
states, the carried damping statistic, and the metric trace. Floats are
written with shortest round-trip formatting, so save/load is lossless.
All file writes go through a write-temp-then-rename helper; a crash never
leaves a half-written artifact at the target path.
"""

from __future__ import annotations

import json
import math
import os
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .filters import Filter, FilterBank
from .learner import LearnerConfig, TrainState
from .metrics import MetricRow, MetricTrace
from .sampler import ChainState, SamplerConfig

__all__ = [
    "NORMALIZATIONS",
    "Dataset",
    "read_pgm",
    "write_pgm",
    "center_crop",
    "bilinear_resize",
    "load_images",
    "synth_texture",
    "gaussian_mixture",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_doc",
    "export_metrics_csv",
    "export_sample_grid",
]

NORMALIZATIONS = ("none", "standardize", "unit_range")

CHECKPOINT_FORMAT = "wframe-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    """An immutable batch of equally shaped signals.

    ``normalization`` records which scaling was applied by the producer;
    consumers must not normalize again.
    """

    items: np.ndarray
    normalization: str = "none"
    source: str = "memory"

    def __post_init__(self):
        items = np.asarray(self.items, dtype=np.float64)
        if items.ndim < 2:
            raise ValueError("items must have shape (count, *grid_shape)")
        if items.shape[0] < 1:
            raise ValueError("dataset must contain at least one item")
        if not np.all(np.isfinite(items)):
            raise ValueError("dataset contains non-finite values")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(
                f"normalization must be one of {NORMALIZATIONS}, "
                f"got {self.normalization!r}"
            )
        items = items.copy()
        items.setflags(write=False)
        object.__setattr__(self, "items", items)

    @property
    def count(self) -> int:
        return self.items.shape[0]

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.items.shape[1:]


def _atomic_write(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f"{path.name}.tmp{os.getpid()}")
    mode = "wb" if isinstance(payload, (bytes, bytearray)) else "w"
    try:
        with open(tmp, mode) as fh:
            fh.write(payload)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


# -- portable graymap IO ---------------------------------------------------

def _pgm_tokens(data: bytes):
    i = 0
    while i < len(data):
        c = data[i:i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary (P5) or ascii (P2) graymap.

    Returns
    -------
    (numpy.ndarray, int)
        Integer-valued float64 image of shape (height, width) and the
        file's declared maximum intensity.
    """
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        if magic not in (b"P5", b"P2"):
            raise ValueError(f"{path}: not a P5/P2 graymap (magic {magic!r})")
        (w_tok, _), (h_tok, _), (max_tok, end) = next(tokens), next(tokens), next(tokens)
    except StopIteration:
        raise ValueError(f"{path}: truncated graymap header") from None
    width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: bad graymap dimensions or maxval")
    if magic == b"P2":
        flat = [int(t) for t, _ in tokens]
        if len(flat) != width * height:
            raise ValueError(f"{path}: expected {width * height} ascii pixels")
        img = np.array(flat, dtype=np.float64)
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raster = data[end + 1:end + 1 + width * height * dtype.itemsize]
        if len(raster) != width * height * dtype.itemsize:
            raise ValueError(f"{path}: truncated raster")
        img = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    if img.max(initial=0) > maxval:
        raise ValueError(f"{path}: pixel exceeds declared maxval")
    return img.reshape(height, width), maxval


def write_pgm(path, image, maxval: int = 255):
    """Write a 2-D array as a binary (P5) graymap, clipping to [0, maxval]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must lie in [1, 65535]")
    pixels = np.clip(np.rint(image), 0, maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode("ascii")
    _atomic_write(path, header + pixels.astype(dtype).tobytes())


def _read_image(path) -> tuple[np.ndarray, int]:
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".png":
        try:
            from PIL import Image
        except ImportError as err:
            raise ImportError(
                "reading PNG files needs pillow (install extra 'png')"
            ) from err
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float64)
        return arr, 255
    raise ValueError(f"unsupported image type: {path}")


def center_crop(image, target_shape) -> np.ndarray:
    """Largest centered crop with the aspect ratio of ``target_shape``."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    th, tw = (int(s) for s in target_shape)
    if th < 1 or tw < 1:
        raise ValueError("target_shape entries must be >= 1")
    h, w = image.shape
    if h * tw >= w * th:
        ch, cw = max(1, int(round(w * th / tw))), w
    else:
        ch, cw = h, max(1, int(round(h * tw / th)))
    ch, cw = min(ch, h), min(cw, w)
    r0 = (h - ch) // 2
    c0 = (w - cw) // 2
    return image[r0:r0 + ch, c0:c0 + cw]


def bilinear_resize(image, out_shape) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and clamped edges."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    oh, ow = (int(s) for s in out_shape)
    if oh < 1 or ow < 1:
        raise ValueError("out_shape entries must be >= 1")
    h, w = image.shape
    rows = np.clip((np.arange(oh) + 0.5) * h / oh - 0.5, 0.0, h - 1.0)
    cols = np.clip((np.arange(ow) + 0.5) * w / ow - 0.5, 0.0, w - 1.0)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = (1.0 - fc) * image[np.ix_(r0, c0)] + fc * image[np.ix_(r0, c1)]
    bot = (1.0 - fc) * image[np.ix_(r1, c0)] + fc * image[np.ix_(r1, c1)]
    return (1.0 - fr) * top + fr * bot


def load_images(path, shape=(16, 16), normalization: str = "none") -> Dataset:
    """Load every .pgm/.png file under a directory into one Dataset.

    Files are taken in sorted name order, center-cropped to the target
    aspect ratio, bilinearly resized to ``shape``, then normalized exactly
    once according to ``normalization``:

    - ``"none"``: raw intensities as stored.
    - ``"standardize"``: per image, zero mean and unit standard deviation.
    - ``"unit_range"``: intensities divided by the file's declared maximum,
      mapping the representable range onto [0, 1].
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    root = Path(path)
    if not root.is_dir():
        raise ValueError(f"{path} is not a directory")
    files = sorted(p for p in root.iterdir()
                   if p.is_file() and p.suffix.lower() in (".pgm", ".png"))
    if not files:
        raise ValueError(f"no .pgm or .png files under {path}")
    items = []
    for p in files:
        img, maxval = _read_image(p)
        img = bilinear_resize(center_crop(img, shape), shape)
        if normalization == "unit_range":
            img = img / maxval
        elif normalization == "standardize":
            img = img - img.mean()
            std = img.std()
            if std > 1e-12:
                img = img / std
        items.append(img)
    return Dataset(np.stack(items), normalization=normalization,
                   source=str(root))


# -- synthetic data --------------------------------------------------------

def synth_texture(kind: str, shape, seed: int, count: int = 64,
                  noise_std: float = 0.05) -> Dataset:
    """Generate a seeded synthetic texture dataset.

    Kinds
    -----
    ``"stripes"``
        One oriented sinusoidal grating per run (orientation and
        wavelength drawn once from the seed), random phase per item.
    ``"checker"``
        A square parity pattern with one cell size per run and random
        integer offsets per item.
    ``"filtered_noise"``
        White noise smoothed with a 3-wide box filter and standardized
        per item.

    Values are zero-centered with amplitude near one, plus additive
    Gaussian pixel noise of scale ``noise_std``.
    """
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ValueError("shape entries must be >= 1")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    items = []
    if kind == "stripes":
        if len(shape) != 2:
            raise ValueError("stripes needs a 2-D shape")
        angle = rng.uniform(0.0, np.pi)
        wavelength = rng.uniform(4.0, 8.0)
        ii, jj = np.indices(shape)
        proj = ii * np.sin(angle) + jj * np.cos(angle)
        for _ in range(count):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            x = np.cos(2.0 * np.pi * proj / wavelength + phase)
            items.append(x + noise_std * rng.standard_normal(shape))
    elif kind == "checker":
        if len(shape) != 2:
            raise ValueError("checker needs a 2-D shape")
        cell = int(rng.integers(2, 5))
        ii, jj = np.indices(shape)
        for _ in range(count):
            oi, oj = rng.integers(0, 2 * cell, size=2)
            parity = ((ii + oi) // cell + (jj + oj) // cell) % 2
            x = 2.0 * parity - 1.0
            items.append(x + noise_std * rng.standard_normal(shape))
    elif kind == "filtered_noise":
        offsets = list(np.ndindex((3,) * len(shape)))
        for _ in range(count):
            white = rng.standard_normal(shape)
            padded = np.pad(white, [(1, 1)] * len(shape), mode="wrap")
            acc = np.zeros(shape)
            for off in offsets:
                acc += padded[tuple(slice(o, o + s) for o, s in zip(off, shape))]
            acc /= len(offsets)
            acc = (acc - acc.mean()) / max(acc.std(), 1e-12)
            items.append(acc + noise_std * rng.standard_normal(shape))
    else:
        raise ValueError(f"unknown texture kind {kind!r}")
    return Dataset(np.stack(items), normalization="none",
                   source=f"synth:{kind}")


def gaussian_mixture(dim: int, components, seed: int, count: int) -> Dataset:
    """Sample a mixture of isotropic Gaussians as ``(dim,)`` signals.

    Parameters
    ----------
    dim : int
        Signal length; all coordinates of one item share a component draw.
    components : sequence of (mean, std, weight)
        Mixture components; weights are normalized to sum to one.
    seed : int
        Seed for the component and noise draws.
    count : int
        Number of items.
    """
    comps = [(float(m), float(s), float(w)) for m, s, w in components]
    if not comps:
        raise ValueError("need at least one component")
    means = np.array([c[0] for c in comps])
    stds = np.array([c[1] for c in comps])
    weights = np.array([c[2] for c in comps])
    if np.any(stds <= 0) or np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("stds must be positive, weights non-negative")
    if count < 1 or dim < 1:
        raise ValueError("count and dim must be >= 1")
    weights = weights / weights.sum()
    rng = np.random.default_rng(seed)
    comp = rng.choice(means.size, size=count, p=weights)
    noise = rng.standard_normal((count, dim))
    items = means[comp][:, None] + stds[comp][:, None] * noise
    return Dataset(items, normalization="none", source="synth:gaussian_mixture")


# -- checkpoints -------------------------------------------------------------

def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _rng_from_state(state: dict) -> np.random.Generator:
    cls = getattr(np.random, state["bit_generator"])
    bg = cls()
    bg.state = state
    return np.random.Generator(bg)


def _row_doc(row: MetricRow) -> dict:
    return {
        "iteration": row.iteration,
        "mode": row.mode,
        "energy_mean": row.energy_mean,
        "response_distance": row.response_distance,
        "w2_1d": None if math.isnan(row.w2_1d) else row.w2_1d,
        "theta_norm": row.theta_norm,
        "update_norm": row.update_norm,
        "diverged": row.diverged,
    }


def _row_from_doc(doc: dict) -> MetricRow:
    doc = dict(doc)
    if doc.get("w2_1d") is None:
        doc["w2_1d"] = float("nan")
    return MetricRow(**doc)


THETA_HISTORY_TAIL = 8


def checkpoint_doc(state: TrainState, config_echo: dict | None = None) -> dict:
    """Build the JSON-serializable checkpoint document for a train state."""
    bank = state.bank
    lc = state.learner_config
    sc = state.sampler_config
    tail = state.theta_history[-THETA_HISTORY_TAIL:]
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": state.seed,
        "bank": {
            "kind": bank.kind,
            "seed": bank.seed,
            "ref_variance": bank.ref_variance,
            "kernels": [f.kernel.tolist() for f in bank.filters],
            "biases": [f.bias for f in bank.filters],
            "theta": bank.theta.tolist(),
        },
        "chains": {
            "shape": list(state.chains.values.shape),
            "values": state.chains.values.tolist(),
            "iteration": state.chains.iteration,
            "rng": [_rng_state(r) for r in state.chains.rngs],
        },
        "sampler_config": {
            "delta": sc.delta,
            "steps_per_iter": sc.steps_per_iter,
            "noise_std": sc.noise_std,
            "use_reference_drift": sc.use_reference_drift,
            "include_w2_drift": sc.include_w2_drift,
            "divergence_limit": sc.divergence_limit,
        },
        "learner": {
            "mode": lc.mode,
            "iteration": state.iteration,
            "config": {
                "mode": lc.mode,
                "learning_rate": lc.learning_rate,
                "beta": lc.beta,
                "gamma": lc.gamma,
                "n_iters": lc.n_iters,
                "clip": None if lc.clip is None else list(lc.clip),
                "batch_obs": lc.batch_obs,
                "batch_syn": lc.batch_syn,
                "init": lc.init,
            },
            "rng_shuffle_state": _rng_state(state.rng_shuffle),
            "rng_gamma_state": _rng_state(state.rng_gamma),
            "theta_history_len": len(state.theta_history),
            "theta_history_tail": [t.tolist() for t in tail],
            "diverged": state.diverged,
            "divergence_info": state.divergence_info,
        },
        "trace": [_row_doc(r) for r in state.trace],
        "config_echo": config_echo,
    }


def save_checkpoint(state: TrainState, path=None,
                    config_echo: dict | None = None) -> dict:
    """Build the lossless checkpoint document; write it too when given a path."""
    doc = checkpoint_doc(state, config_echo)
    if path is not None:
        _atomic_write(path, json.dumps(doc, allow_nan=False, indent=1))
    return doc


def load_checkpoint(source) -> TrainState:
    """Reconstruct a :class:`~wframe.learner.TrainState` from a checkpoint.

    ``source`` is either the document itself (a mapping) or a path to a
    JSON file holding one.  Round-trips exactly: resuming from the
    returned state produces the same trajectory as never having stopped.
    """
    if isinstance(source, Mapping):
        doc = source
        path = "<document>"
    else:
        path = source
        with open(path) as fh:
            doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version {doc.get('version')!r}"
        )
    bank_doc = doc["bank"]
    bank = FilterBank(
        [Filter(np.asarray(k), b)
         for k, b in zip(bank_doc["kernels"], bank_doc["biases"])],
        theta=bank_doc["theta"],
        ref_variance=bank_doc["ref_variance"],
        kind=bank_doc["kind"],
        seed=bank_doc["seed"],
    )
    chains_doc = doc["chains"]
    values = np.asarray(chains_doc["values"], dtype=np.float64)
    if list(values.shape) != list(chains_doc["shape"]):
        raise ValueError("chain values do not match the recorded shape")
    chains = ChainState(
        values,
        [_rng_from_state(s) for s in chains_doc["rng"]],
        iteration=chains_doc["iteration"],
    )
    learner_doc = doc["learner"]
    lc_doc = dict(learner_doc["config"])
    if lc_doc.get("clip") is not None:
        lc_doc["clip"] = tuple(lc_doc["clip"])
    iteration = learner_doc["iteration"]
    # At an iteration boundary the previous synthesis batch is exactly the
    # current chain values, so the snapshot needs no separate storage.
    prev = values.copy() if iteration > 0 else None
    state = TrainState(
        bank=bank,
        chains=chains,
        sampler_config=SamplerConfig(**doc["sampler_config"]),
        learner_config=LearnerConfig(**lc_doc),
        trace=MetricTrace(_row_from_doc(r) for r in doc["trace"]),
        rng_shuffle=_rng_from_state(learner_doc["rng_shuffle_state"]),
        rng_gamma=_rng_from_state(learner_doc["rng_gamma_state"]),
        iteration=iteration,
        prev_snapshot=prev,
        theta_history=[np.asarray(t) for t in learner_doc["theta_history_tail"]],
        diverged=learner_doc["diverged"],
        divergence_info=learner_doc["divergence_info"],
        seed=doc["seed"],
    )
    return state


# -- exports -----------------------------------------------------------------

def export_metrics_csv(trace: MetricTrace, path):
    """Write the trace in the fixed CSV layout (atomic replace)."""
    _atomic_write(path, trace.to_csv())


def export_sample_grid(batch, path, cols: int | None = None):
    """Render a batch of signals as one tiled 8-bit graymap.

    Signals are arranged row-major into a grid with 1-pixel black
    separators; 1-D signals render as single-row tiles. One affine map
    (recorded in a ``<path>.meta.txt`` sidecar) takes the batch min/max to
     0/255, so relative contrast across tiles is preserved.
    """
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim == 2:
        tiles = X[:, None, :]
    elif X.ndim == 3:
        tiles = X
    else:
        raise ValueError("batch must have shape (count, width) or (count, h, w)")
    if not np.all(np.isfinite(tiles)):
        raise ValueError("batch contains non-finite values")
    b, h, w = tiles.shape
    if cols is None:
        cols = int(math.ceil(math.sqrt(b)))
    cols = max(1, min(int(cols), b))
    rows = int(math.ceil(b / cols))
    lo = float(tiles.min())
    hi = float(tiles.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    canvas = np.zeros((rows * h + rows - 1, cols * w + cols - 1))
    for i in range(b):
        r, c = divmod(i, cols)
        canvas[r * (h + 1):r * (h + 1) + h,
               c * (w + 1):c * (w + 1) + w] = (tiles[i] - lo) * scale
    write_pgm(path, canvas, maxval=255)
    meta = (f"count={b}\nrows={rows}\ncols={cols}\n"
            f"lo={lo!r}\nhi={hi!r}\nscale={scale!r}\n")
    _atomic_write(f"{path}.meta.txt", meta)
