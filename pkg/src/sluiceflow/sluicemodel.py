"""Two-task flow classifier over windows of domain-name CNN encodings.

Three sharing modes: a sluice network with trainable cross-task mixing
(2x2 matrices after each hidden stage, plus per-task layer weights that
concatenate both hidden stages before the output layer), hard parameter
sharing (single trunk, two output heads), and independent single-task models.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from enum import Enum

import numpy as np

from . import nncore
from .featurize import Alphabet, DEFAULT_ALPHABET, DOMAIN_LENGTH, N_NUMERIC
from .nncore import Affine, CharEmbedding, Conv1D, MaxPoolOverLength, ReLU

TASKS = ("client", "domain")
ALPHA_INIT_NOISE = 0.05


def _bias_init(size: int, rng, dtype) -> np.ndarray:
    # small nonzero values keep padding slots off the exact ReLU kink,
    # where backprop subgradients and finite differences disagree
    return rng.uniform(-0.01, 0.01, size=size).astype(dtype)


class ModelMode(str, Enum):
    SLUICE = "sluice"
    HARD_SHARING = "hard_sharing"
    INDEPENDENT_CLIENT = "independent_client"
    INDEPENDENT_DOMAIN = "independent_domain"

    @property
    def active_tasks(self) -> tuple[str, ...]:
        if self is ModelMode.INDEPENDENT_CLIENT:
            return ("client",)
        if self is ModelMode.INDEPENDENT_DOMAIN:
            return ("domain",)
        return TASKS


@dataclass(frozen=True)
class DomainCnnConfig:
    """Sizes of the character-level domain-name encoder."""

    embedding_size: int = 16
    kernel_width: int = 8
    n_filters: int = 32
    dense_units: int = 16

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.kernel_width > DOMAIN_LENGTH:
            raise ValueError(
                f"kernel_width {self.kernel_width} exceeds sequence length"
            )


# Tuned configurations reported for the full-scale dataset; desk-scale runs
# use the smaller DomainCnnConfig defaults above.
TUNED_CONFIGS = {
    ModelMode.SLUICE: (DomainCnnConfig(128, 16, 512, 256), 512, 5),
    ModelMode.HARD_SHARING: (DomainCnnConfig(64, 16, 512, 64), 512, 3),
    ModelMode.INDEPENDENT_CLIENT: (DomainCnnConfig(64, 16, 128, 32), 512, 4),
    ModelMode.INDEPENDENT_DOMAIN: (DomainCnnConfig(64, 16, 128, 32), 512, 4),
}


class _Branch:
    """Domain CNN applied slot-wise, concatenated with numeric features."""

    def __init__(self, prefix, cnn: DomainCnnConfig, alphabet_size, rng, dtype):
        self.prefix = prefix
        self.cnn = cnn
        self.embed = CharEmbedding(
            nncore.glorot_init((alphabet_size, cnn.embedding_size), rng, dtype)
        )
        self.conv = Conv1D(
            nncore.glorot_init(
                (cnn.kernel_width, cnn.embedding_size, cnn.n_filters), rng, dtype
            ),
            _bias_init(cnn.n_filters, rng, dtype),
        )
        self.pool = MaxPoolOverLength()
        self.dense = Affine(
            nncore.glorot_init((cnn.n_filters, cnn.dense_units), rng, dtype),
            _bias_init(cnn.dense_units, rng, dtype),
        )
        self.relu = ReLU()
        self._shape = None

    def layers(self):
        return {
            f"{self.prefix}/embed": self.embed,
            f"{self.prefix}/conv": self.conv,
            f"{self.prefix}/dense": self.dense,
        }

    def forward(self, onehot: np.ndarray, numeric: np.ndarray) -> np.ndarray:
        n, slots, length, alpha = onehot.shape
        self._shape = (n, slots)
        flat = onehot.reshape(n * slots, length, alpha)
        enc = self.relu.forward(
            self.dense.forward(self.pool.forward(self.conv.forward(self.embed.forward(flat))))
        )
        enc = enc.reshape(n, slots, self.cnn.dense_units)
        h1 = np.concatenate([enc, numeric], axis=2)
        return h1.reshape(n, slots * (self.cnn.dense_units + N_NUMERIC))

    def backward(self, grad_h1: np.ndarray) -> None:
        n, slots = self._shape
        per_slot = self.cnn.dense_units + N_NUMERIC
        grad = grad_h1.reshape(n, slots, per_slot)[:, :, : self.cnn.dense_units]
        grad = grad.reshape(n * slots, self.cnn.dense_units)
        self.embed.backward(
            self.conv.backward(self.pool.backward(self.dense.backward(self.relu.backward(grad))))
        )


class SluiceModel:
    """The assembled model; build with build_model or load from a file."""

    def __init__(
        self,
        mode: ModelMode,
        cnn: DomainCnnConfig,
        dense_units: int,
        k: int,
        seed: int,
        alphabet: Alphabet = DEFAULT_ALPHABET,
        dtype=np.float64,
    ):
        self.mode = mode
        self.cnn = cnn
        self.dense_units = dense_units
        self.k = k
        self.seed = seed
        self.alphabet = alphabet
        self.dtype = dtype
        rng = np.random.default_rng(seed)

        self.h1_dim = (2 * k + 1) * (cnn.dense_units + N_NUMERIC)

        if mode is ModelMode.HARD_SHARING:
            shared = _Branch("cnn_shared", cnn, alphabet.size, rng, dtype)
            self.branches = {task: shared for task in TASKS}
            cls = self._make_classifier(rng)
            self.classifiers = {task: cls for task in TASKS}
        else:
            self.branches = {
                task: _Branch(f"cnn_{task}", cnn, alphabet.size, rng, dtype)
                for task in mode.active_tasks
            }
            self.classifiers = {
                task: self._make_classifier(rng) for task in mode.active_tasks
            }
        self.cls_relu = {task: ReLU() for task in mode.active_tasks}
        self.heads = {
            task: Affine(
                nncore.glorot_init(
                    (self.h1_dim + dense_units, 2), rng, dtype
                ),
                _bias_init(2, rng, dtype),
            )
            for task in mode.active_tasks
        }

        if mode is ModelMode.SLUICE:
            eye = np.eye(2, dtype=dtype)
            self.alpha1 = eye + rng.uniform(-ALPHA_INIT_NOISE, ALPHA_INIT_NOISE, (2, 2))
            self.alpha2 = eye + rng.uniform(-ALPHA_INIT_NOISE, ALPHA_INIT_NOISE, (2, 2))
            self.beta = np.full((2, 2), 0.5, dtype=dtype)
        else:
            self.alpha1 = np.eye(2, dtype=dtype)
            self.alpha2 = np.eye(2, dtype=dtype)
            self.beta = np.tile(np.array([0.0, 1.0], dtype=dtype), (2, 1))
        self._mix_grads = {}
        self._cache = None

    def _make_classifier(self, rng) -> Affine:
        return Affine(
            nncore.glorot_init((self.h1_dim, self.dense_units), rng, self.dtype),
            _bias_init(self.dense_units, rng, self.dtype),
        )

    # -- parameter bookkeeping ------------------------------------------------

    def _layer_map(self) -> dict[str, nncore.Layer]:
        layers: dict[str, nncore.Layer] = {}
        for task in self.mode.active_tasks:
            layers.update(self.branches[task].layers())
            prefix = "shared" if self.mode is ModelMode.HARD_SHARING else task
            layers[f"cls_{prefix}/dense"] = self.classifiers[task]
            layers[f"out_{task}/head"] = self.heads[task]
        return layers

    def params(self) -> dict[str, np.ndarray]:
        """Trainable parameters; alpha/beta only in sluice mode."""
        out: dict[str, np.ndarray] = {}
        for lname, layer in sorted(self._layer_map().items()):
            for pname, p in layer.params.items():
                out[f"{lname}/{pname}"] = p
        if self.mode is ModelMode.SLUICE:
            out["mix/alpha1"] = self.alpha1
            out["mix/alpha2"] = self.alpha2
            out["mix/beta"] = self.beta
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for lname, layer in sorted(self._layer_map().items()):
            for pname in layer.params:
                out[f"{lname}/{pname}"] = layer.grads[pname]
        if self.mode is ModelMode.SLUICE:
            out.update(self._mix_grads)
        return out

    def zero_grads(self):
        for layer in set(self._layer_map().values()):
            layer.zero_grads()
        self._mix_grads = {
            "mix/alpha1": np.zeros_like(self.alpha1),
            "mix/alpha2": np.zeros_like(self.alpha2),
            "mix/beta": np.zeros_like(self.beta),
        }

    def set_params(self, values: dict[str, np.ndarray]):
        current = self.params()
        for name, value in values.items():
            if name not in current:
                raise KeyError(f"unknown parameter {name}")
            if current[name].shape != value.shape:
                raise ValueError(f"shape mismatch for {name}")
            current[name][...] = value.astype(self.dtype)

    # -- forward / backward ---------------------------------------------------

    def forward(self, onehot: np.ndarray, numeric: np.ndarray) -> dict[str, np.ndarray]:
        """Per-task logits (n, 2) for a batch of featurized windows."""
        onehot = onehot.astype(self.dtype, copy=False)
        numeric = numeric.astype(self.dtype, copy=False)
        tasks = self.mode.active_tasks
        if self.mode is ModelMode.HARD_SHARING:
            h1_shared = self.branches["client"].forward(onehot, numeric)
            h1 = {task: h1_shared for task in tasks}
        else:
            h1 = {task: self.branches[task].forward(onehot, numeric) for task in tasks}

        if len(tasks) == 1:
            h1p = dict(h1)
        else:
            h1p = {
                t: sum(self.alpha1[i, j] * h1[s] for j, s in enumerate(TASKS))
                for i, t in enumerate(TASKS)
            }

        if self.mode is ModelMode.HARD_SHARING:
            h2_shared = self.cls_relu["client"].forward(
                self.classifiers["client"].forward(h1p["client"])
            )
            h2 = {task: h2_shared for task in tasks}
        else:
            h2 = {
                task: self.cls_relu[task].forward(
                    self.classifiers[task].forward(h1p[task])
                )
                for task in tasks
            }

        if len(tasks) == 1:
            h2p = dict(h2)
        else:
            h2p = {
                t: sum(self.alpha2[i, j] * h2[s] for j, s in enumerate(TASKS))
                for i, t in enumerate(TASKS)
            }

        logits = {}
        for task in tasks:
            i = TASKS.index(task)
            combined = np.concatenate(
                [self.beta[i, 0] * h1p[task], self.beta[i, 1] * h2p[task]], axis=1
            )
            logits[task] = self.heads[task].forward(combined)
        self._cache = {"h1": h1, "h1p": h1p, "h2": h2, "h2p": h2p}
        return logits

    def backward(self, grad_logits: dict[str, np.ndarray]) -> None:
        """Accumulate parameter gradients; consumes the last forward's cache."""
        cache, self._cache = self._cache, None
        if cache is None:
            raise RuntimeError("backward called without a pending forward")
        if self.mode is ModelMode.SLUICE and not self._mix_grads:
            self._mix_grads = {
                "mix/alpha1": np.zeros_like(self.alpha1),
                "mix/alpha2": np.zeros_like(self.alpha2),
                "mix/beta": np.zeros_like(self.beta),
            }
        h1, h1p, h2, h2p = cache["h1"], cache["h1p"], cache["h2"], cache["h2p"]
        tasks = self.mode.active_tasks

        d_h1p = {task: 0.0 for task in tasks}
        d_h2p = {}
        for task in tasks:
            i = TASKS.index(task)
            d_combined = self.heads[task].backward(grad_logits[task])
            dA = d_combined[:, : self.h1_dim]
            dB = d_combined[:, self.h1_dim :]
            if self.mode is ModelMode.SLUICE:
                self._mix_grads["mix/beta"][i, 0] += float(np.sum(dA * h1p[task]))
                self._mix_grads["mix/beta"][i, 1] += float(np.sum(dB * h2p[task]))
            d_h1p[task] = d_h1p[task] + self.beta[i, 0] * dA
            d_h2p[task] = self.beta[i, 1] * dB

        # un-mix stage 2
        if len(tasks) == 1:
            d_h2 = d_h2p
        else:
            if self.mode is ModelMode.SLUICE:
                for i, t in enumerate(TASKS):
                    for j, s in enumerate(TASKS):
                        self._mix_grads["mix/alpha2"][i, j] += float(
                            np.sum(d_h2p[t] * h2[s])
                        )
            d_h2 = {
                s: sum(self.alpha2[i, j] * d_h2p[t] for i, t in enumerate(TASKS))
                for j, s in enumerate(TASKS)
            }

        if self.mode is ModelMode.HARD_SHARING:
            d_shared = d_h2["client"] + d_h2["domain"]
            d_pre = self.cls_relu["client"].backward(d_shared)
            d_from_cls = self.classifiers["client"].backward(d_pre)
            for task in tasks:
                d_h1p[task] = d_h1p[task] + 0.5 * d_from_cls
            # both h1p entries are the same shared array; split evenly so the
            # summed branch gradient below is exact
        else:
            for task in tasks:
                d_pre = self.cls_relu[task].backward(d_h2[task])
                d_h1p[task] = d_h1p[task] + self.classifiers[task].backward(d_pre)

        # un-mix stage 1
        if len(tasks) == 1:
            d_h1 = d_h1p
        else:
            if self.mode is ModelMode.SLUICE:
                for i, t in enumerate(TASKS):
                    for j, s in enumerate(TASKS):
                        self._mix_grads["mix/alpha1"][i, j] += float(
                            np.sum(d_h1p[t] * h1[s])
                        )
            d_h1 = {
                s: sum(self.alpha1[i, j] * d_h1p[t] for i, t in enumerate(TASKS))
                for j, s in enumerate(TASKS)
            }

        if self.mode is ModelMode.HARD_SHARING:
            self.branches["client"].backward(d_h1["client"] + d_h1["domain"])
        else:
            for task in tasks:
                self.branches[task].backward(d_h1[task])

    # -- losses and prediction ------------------------------------------------

    def forward_loss(
        self,
        onehot: np.ndarray,
        numeric: np.ndarray,
        labels: dict[str, np.ndarray],
        task_weights: dict[str, float] | None = None,
        sample_weights: dict[str, np.ndarray] | None = None,
        accumulate_grads: bool = True,
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Weighted two-task cross-entropy; optionally backpropagates.

        ``labels[task]`` uses -1 for unlabeled samples (their weight is
        forced to 0).  Returns (loss, per-task probability arrays).
        """
        tasks = self.mode.active_tasks
        if task_weights is None:
            task_weights = {task: 1.0 for task in tasks}
        logits = self.forward(onehot, numeric)
        total = 0.0
        probs = {}
        grad_logits = {}
        for task in tasks:
            y = labels[task]
            weights = (
                np.ones(len(y), dtype=self.dtype)
                if sample_weights is None
                else sample_weights[task].astype(self.dtype)
            )
            weights = np.where(y >= 0, weights, 0.0)
            safe_y = np.where(y >= 0, y, 0)
            loss, p, grad = nncore.softmax_xent(logits[task], safe_y, weights)
            w_t = task_weights.get(task, 0.0)
            total += w_t * loss
            probs[task] = p
            grad_logits[task] = w_t * grad
        if accumulate_grads:
            self.backward(grad_logits)
        else:
            self._cache = None
        return total, probs

    def predict(self, onehot: np.ndarray, numeric: np.ndarray) -> dict[str, np.ndarray]:
        """Positive-class probability per active task for a batch of windows."""
        logits = self.forward(onehot, numeric)
        self._cache = None
        out = {}
        for task, lg in logits.items():
            shifted = lg - lg.max(axis=1, keepdims=True)
            exp = np.exp(shifted)
            out[task] = exp[:, 1] / exp.sum(axis=1)
        return out

    # -- serialization --------------------------------------------------------

    def save(self, path, extra_header: dict | None = None) -> None:
        header = {
            "mode": self.mode.value,
            "k": self.k,
            "cnn": asdict(self.cnn),
            "dense_units": self.dense_units,
            "seed": self.seed,
            "alphabet": self.alphabet.symbols,
        }
        if extra_header:
            header["extra"] = extra_header
        nncore.save_params(path, self.params(), header)

    @classmethod
    def load(cls, path) -> "SluiceModel":
        params, header = nncore.load_params(path)
        model = cls(
            mode=ModelMode(header["mode"]),
            cnn=DomainCnnConfig(**header["cnn"]),
            dense_units=header["dense_units"],
            k=header["k"],
            seed=header.get("seed", 0),
            alphabet=Alphabet(header["alphabet"]),
        )
        model.set_params(params)
        return model


def build_model(
    mode: ModelMode,
    cnn: DomainCnnConfig | None = None,
    dense_units: int = 64,
    k: int = 2,
    seed: int = 0,
    alphabet: Alphabet = DEFAULT_ALPHABET,
    dtype=np.float64,
) -> SluiceModel:
    """Construct a model of the requested sharing mode."""
    return SluiceModel(
        mode=mode,
        cnn=cnn or DomainCnnConfig(),
        dense_units=dense_units,
        k=k,
        seed=seed,
        alphabet=alphabet,
        dtype=dtype,
    )


def domain_cnn_forward(model: SluiceModel, encoding: np.ndarray, task: str | None = None) -> np.ndarray:
    """Encode one (40, A) domain matrix with a branch's CNN."""
    task = task or model.mode.active_tasks[0]
    branch = model.branches[task]
    x = encoding[None, :, :].astype(model.dtype)
    out = branch.relu.forward(
        branch.dense.forward(branch.pool.forward(branch.conv.forward(branch.embed.forward(x))))
    )
    return out[0]
