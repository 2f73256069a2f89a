"""End-to-end orchestration: fit, transform, evaluate, visualize."""

import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import io
from .alignment import align
from .cae import CaeParams, TrainConfig
from .evaluation import kmeans, knn_classify, ltsa_mode_features, pca_project, purity
from .neighborhoods import NeighborhoodSet, build_neighborhoods
from .oos import EmbeddingScale, UniformNet, embed_many, fit_embedding_scale, train_uniform_nets
from .scae import ScaeModel, train_local_scaes

log = logging.getLogger(__name__)

MODES = ("ldfa", "ltsa", "pca")


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 10
    widths: tuple = ()  # full chain including the input dimension; empty means [D, d]
    d: int = 2
    lam: float = 0.1
    learning_rate: float = 0.1
    init_scale: float = 0.05
    epochs_pretrain: int = 200
    epochs_finetune: int = 200
    epochs_align: int = 200
    epochs_uniform: int = 200
    align_learning_rate: float = 0.1
    seed: int = 0
    margin: float = 0.1
    mode: str = "ldfa"
    oos: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not 0.0 < self.margin < 0.5:
            raise ValueError("margin must lie in (0, 0.5)")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    def chain(self, input_dim):
        widths = list(self.widths) or [input_dim, self.d]
        if widths[0] != input_dim:
            raise ValueError(f"layer widths {widths} must start at the input dimension {input_dim}")
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        return widths

    def train_config(self, epochs):
        return TrainConfig(self.lam, self.learning_rate, epochs, self.seed, self.init_scale)

    def align_config(self, epochs):
        return TrainConfig(0.0, self.align_learning_rate, epochs, self.seed, self.init_scale)

    def to_dict(self):
        out = asdict(self)
        out["widths"] = list(self.widths)
        return out


def _parse_value(name, raw, kind):
    raw = raw.strip()
    if name == "widths":
        return tuple(int(v) for v in raw.replace("-", ",").split(",") if v.strip())
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    return kind(raw)


_FIELD_TYPES = {
    "k": int, "widths": tuple, "d": int, "lam": float, "learning_rate": float, "init_scale": float,
    "epochs_pretrain": int, "epochs_finetune": int, "epochs_align": int, "epochs_uniform": int,
    "align_learning_rate": float, "seed": int, "margin": float, "mode": str, "oos": bool,
}
_ALIASES = {"lambda": "lam", "neighborhood_size": "k", "layers": "widths"}


def parse_config(text, base=None):
    """``key=value`` lines (``#`` comments allowed) over ``base`` or the defaults."""
    values = (base or PipelineConfig()).to_dict()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _FIELD_TYPES:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, _FIELD_TYPES[key])
    return PipelineConfig(**values)


def load_config(path, base=None):
    with open(path) as f:
        return parse_config(f.read(), base)


@dataclass
class ModelArchive:
    config: PipelineConfig
    normalizer: io.Normalizer
    x: np.ndarray  # normalised training samples, (D, N)
    embedding: np.ndarray  # (d, N)
    neighborhoods: NeighborhoodSet = None
    scaes: list = None
    scale: EmbeddingScale = None
    uniform_nets: list = None
    pca_mean: np.ndarray = None
    pca_components: np.ndarray = None  # (d, D)
    notes: tuple = field(default=())

    @property
    def n(self):
        return self.x.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ModelArchive):
            return NotImplemented
        a, b = self.to_arrays(), other.to_arrays()
        return self.manifest() == other.manifest() and a.keys() == b.keys() and all(
            np.array_equal(a[k], b[k]) for k in a
        )

    def manifest(self):
        return {
            "format": "ldfa-model",
            "config": self.config.to_dict(),
            "input_dim": int(self.x.shape[0]),
            "n_samples": int(self.n),
            "notes": list(self.notes),
            "n_layers": len(self.scaes[0].layers) if self.scaes else 0,
            "has_uniform_nets": self.uniform_nets is not None,
            "uniform_owners": [i for i, net in enumerate(self.uniform_nets or []) if net is not None],
        }

    def to_arrays(self):
        arrays = {
            "normalizer.lo": self.normalizer.lo,
            "normalizer.span": self.normalizer.span,
            "x": self.x,
            "embedding": self.embedding,
        }
        if self.neighborhoods is not None:
            arrays["neighborhoods"] = self.neighborhoods.member_array()
        if self.pca_mean is not None:
            arrays["pca.mean"] = self.pca_mean
            arrays["pca.components"] = self.pca_components
        for i, model in enumerate(self.scaes or []):
            for l, p in enumerate(model.layers):
                arrays[f"scae.{i}.{l}.w"] = p.w
                arrays[f"scae.{i}.{l}.b"] = p.b
                arrays[f"scae.{i}.{l}.c"] = p.c
        if self.scale is not None:
            arrays["scale.offset"] = self.scale.offset
            arrays["scale.gain"] = self.scale.gain
            arrays["scale.degenerate"] = self.scale.degenerate.astype(np.float64)
        for i, net in enumerate(self.uniform_nets or []):
            if net is None:
                continue
            for l, (q, v) in enumerate(net.layers):
                arrays[f"uniform.{i}.{l}.q"] = q
                arrays[f"uniform.{i}.{l}.v"] = v
        return arrays

    def save(self, path):
        io.save_archive(path, self.manifest(), self.to_arrays())

    @classmethod
    def load(cls, path):
        manifest, arrays = io.load_archive(path)
        if manifest.get("format") != "ldfa-model":
            raise io.ParseError(f"{path}: not a model archive")
        cfg = PipelineConfig(**manifest["config"])
        n = manifest["n_samples"]
        n_layers = manifest["n_layers"]
        nbrs = None
        if "neighborhoods" in arrays:
            nbrs = NeighborhoodSet.from_member_array(arrays["neighborhoods"].astype(np.int64))
        scaes = None
        if n_layers:
            scaes = [
                ScaeModel(tuple(
                    CaeParams(arrays[f"scae.{i}.{l}.w"], arrays[f"scae.{i}.{l}.b"], arrays[f"scae.{i}.{l}.c"])
                    for l in range(n_layers)
                ))
                for i in range(n)
            ]
        scale = None
        if "scale.offset" in arrays:
            scale = EmbeddingScale(arrays["scale.offset"], arrays["scale.gain"], arrays["scale.degenerate"] > 0)
        nets = None
        if manifest["has_uniform_nets"]:
            owners = set(manifest["uniform_owners"])
            nets = [
                UniformNet(tuple(
                    (arrays[f"uniform.{i}.{l}.q"], arrays[f"uniform.{i}.{l}.v"]) for l in range(n_layers + 1)
                )) if i in owners else None
                for i in range(n)
            ]
        return cls(
            config=cfg,
            normalizer=io.Normalizer(arrays["normalizer.lo"], arrays["normalizer.span"]),
            x=arrays["x"],
            embedding=arrays["embedding"],
            neighborhoods=nbrs,
            scaes=scaes,
            scale=scale,
            uniform_nets=nets,
            pca_mean=arrays.get("pca.mean"),
            pca_components=arrays.get("pca.components"),
            notes=tuple(manifest.get("notes", ())),
        )


def default_threads():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def fit(config, x, normalizer=None, threads=1, oos_centers=None):
    """Run the configured reduction on normalised samples ``x`` (D, N).

    Returns ``(archive, embedding)``. With ``config.oos`` the archive also
    carries one fine-tuned network per neighbourhood (or per index in
    ``oos_centers``) for :func:`transform`.
    """
    x = np.asarray(x, dtype=np.float64)
    dim, n = x.shape
    normalizer = normalizer or io.Normalizer.fixed(dim, 0, 1)
    if config.mode == "pca":
        emb = pca_project(x, config.d)
        mean = x.mean(axis=1)
        # recover the projection used for the scores so transform can reuse it
        comps = np.linalg.lstsq((x - mean[:, None]).T, emb.h.T, rcond=None)[0].T
        archive = ModelArchive(config, normalizer, x, emb.h, pca_mean=mean, pca_components=comps)
        return archive, emb

    if config.d > n - 1:
        raise ValueError(f"embedding dimension {config.d} needs at least {config.d + 1} samples")
    nbrs = build_neighborhoods(x, config.k)
    log.info("built %d neighbourhoods of size %d", n, config.k + 1)
    scaes = None
    if config.mode == "ltsa":
        blocks = ltsa_mode_features(x, nbrs, config.d)
    else:
        dims = config.chain(dim)
        trained = train_local_scaes(
            x, nbrs, dims,
            config.train_config(config.epochs_pretrain),
            config.train_config(config.epochs_finetune),
            threads=threads,
        )
        scaes = [m for m, _ in trained]
        blocks = [b for _, b in trained]
        log.info("trained %d local stacks %s", n, dims)
    emb = align(blocks, n, config.d)
    archive = ModelArchive(config, normalizer, x, emb.h, neighborhoods=nbrs, scaes=scaes, notes=emb.warnings)
    if config.oos and config.mode == "ldfa":
        scale = fit_embedding_scale(emb.h, config.margin)
        archive.scale = scale
        archive.uniform_nets = train_uniform_nets(
            x, scaes, blocks, scale.apply(emb.h),
            config.align_config(config.epochs_align),
            config.align_config(config.epochs_uniform),
            centers=oos_centers, threads=threads,
        )
        log.info("trained out-of-sample networks")
    return archive, emb


def transform(archive, x_new):
    """Embed normalised samples ``x_new`` (D, n) with a fitted archive."""
    x_new = np.asarray(x_new, dtype=np.float64)
    dim = archive.x.shape[0]
    if x_new.ndim != 2 or x_new.shape[0] != dim:
        raise ValueError(f"expected samples with {dim} features, got shape {x_new.shape}")
    if x_new.shape[1] == 0:
        return np.zeros((archive.embedding.shape[0], 0))
    if archive.pca_components is not None:
        return archive.pca_components @ (x_new - archive.pca_mean[:, None])
    if archive.uniform_nets is None:
        raise ValueError("this model has no out-of-sample networks; refit with oos=true in ldfa mode")
    return embed_many(x_new, archive.x, archive.uniform_nets, archive.scale)


def class_split(labels, train_fraction, seed):
    """Per-class random split; returns (train_idx, test_idx), each sorted."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    train, test = [], []
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        cut = int(round(train_fraction * len(idx)))
        train.extend(idx[:cut])
        test.extend(idx[cut:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


@dataclass(frozen=True)
class MetricRow:
    name: str
    value: float
    seed: int

    def __str__(self):
        return f"{self.name}\t{self.value:.10g}\t{self.seed}"


def evaluate(embedding, labels, task, seeds=(0,), train_fraction=0.7, restarts=10):
    """Metric rows, one per seed: k-means purity or 1-NN accuracy."""
    embedding = np.asarray(embedding, dtype=np.float64)
    labels = list(labels)
    if embedding.shape[1] != len(labels):
        raise ValueError(f"{embedding.shape[1]} embedded samples but {len(labels)} labels")
    rows = []
    for seed in seeds:
        if task == "cluster":
            n_clusters = len(set(labels))
            res = kmeans(embedding, n_clusters, restarts=restarts, seed=seed)
            rows.append(MetricRow("purity", purity(res.assignment, labels), seed))
        elif task == "classify":
            tr, te = class_split(labels, train_fraction, seed)
            lab = np.asarray(labels)
            acc = knn_classify(embedding[:, tr], lab[tr], embedding[:, te], lab[te])
            rows.append(MetricRow("knn_accuracy", acc, seed))
        else:
            raise ValueError(f"unknown task {task!r}; use 'cluster' or 'classify'")
    return rows


def format_metrics(rows):
    return "metric\tvalue\tseed\n" + "".join(f"{r}\n" for r in rows)


def visualize(embedding, labels, out_path):
    """Scatter of the first two embedding dimensions as SVG, plus a sidecar CSV.

    Returns the sidecar path.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.shape[0] < 2:
        raise ValueError("visualisation needs an embedding with d >= 2; refit with a larger d")
    labels = [str(v) for v in labels]
    if len(labels) != embedding.shape[1]:
        raise ValueError(f"{embedding.shape[1]} embedded samples but {len(labels)} labels")
    classes = sorted(set(labels))
    cmap = plt.get_cmap("tab10" if len(classes) <= 10 else "tab20")
    plt.rcParams["svg.hashsalt"] = "ldfa"
    fig, ax = plt.subplots(figsize=(6, 6))
    lab = np.asarray(labels)
    for i, cls in enumerate(classes):
        sel = lab == cls
        ax.scatter(embedding[0, sel], embedding[1, sel], s=8, color=cmap(i % cmap.N), label=cls)
    ax.legend(markerscale=2, fontsize="small", loc="best")
    ax.set_xlabel("dim 1")
    ax.set_ylabel("dim 2")
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    sidecar = f"{out_path}.csv"
    with open(sidecar, "w") as f:
        f.write("x,y,label\n")
        for j in range(embedding.shape[1]):
            f.write(f"{embedding[0, j]:.17g},{embedding[1, j]:.17g},{labels[j]}\n")
    return sidecar
