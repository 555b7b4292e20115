"""Scene classifier and pose regressor networks, and checkpoint files.

Both networks share a conv backbone of stages ``conv3x3 -> batch-norm ->
ReLU -> maxpool2``. The classifier global-average-pools the last stage
and runs dense layers each followed by swish, then a dense layer to one
logit per scene. The regressor keeps a coarse spatial grid (average pool
down to ``head_grid`` x ``head_grid``) so position information survives,
then runs dense layers with drop-connect, batch-norm, ReLU and dropout,
and ends in a raw 7-wide dense layer: normalized x, y, z then w, p, q, r.

Weights use fan-in scaled uniform init, ``U(-sqrt(6/fan_in), +sqrt(6/fan_in))``;
biases and batch-norm shifts start at 0, batch-norm scales at 1.

Checkpoint layout (all integers unsigned 32-bit little-endian)::

    b"ICPS" | version | kind byte (0 classifier, 1 regressor)
    | len + UTF-8 JSON header (config echo and metadata)
    | repeated: len + UTF-8 name | rank | dims... | float64 LE values
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptCheckpoint, InvalidConfig, ModelKindMismatch, ShapeMismatch, VersionMismatch
from .geometry import NormalizationBounds
from .nn import functional as F
from .nn.tensor import Tensor
from .rng import numpy_rng

MAGIC = b"ICPS"
FORMAT_VERSION = 1
KINDS = {"classifier": 0, "regressor": 1}


@dataclass(frozen=True)
class ClassifierConfig:
    input_size: tuple[int, int] = (32, 32)
    num_classes: int = 9
    conv_filters: tuple[int, ...] = (16, 32, 64)
    dense_widths: tuple[int, ...] = (128, 64)
    dropout: float = 0.2
    batch_norm: bool = True

    def validate(self) -> None:
        _validate_common(self)
        if self.num_classes < 2:
            raise InvalidConfig("classifier needs at least two classes")


@dataclass(frozen=True)
class RegressorConfig:
    input_size: tuple[int, int] = (32, 32)
    conv_filters: tuple[int, ...] = (12, 24, 48)
    dense_widths: tuple[int, ...] = (96, 48)
    dropout: float = 0.1
    dropconnect: float = 0.0
    activity_penalty: float = 0.0
    beta: float = 1.0
    batch_norm: bool = True
    head_grid: int = 2
    output_dim: int = field(default=7, init=False)

    def validate(self) -> None:
        _validate_common(self)
        if not 0.0 <= self.dropconnect < 1.0:
            raise InvalidConfig("dropconnect rate must lie in [0, 1)")
        if self.activity_penalty < 0 or self.beta <= 0:
            raise InvalidConfig("activity_penalty must be >= 0 and beta > 0")
        fh, fw = _feature_size(self)
        if self.head_grid < 1 or fh % self.head_grid or fw % self.head_grid:
            raise InvalidConfig(f"head_grid {self.head_grid} must divide the final feature map {fh}x{fw}")


def _validate_common(cfg) -> None:
    if len(cfg.input_size) != 2 or min(cfg.input_size) < 1:
        raise InvalidConfig("input_size must be two positive integers")
    if not cfg.conv_filters or not cfg.dense_widths:
        raise InvalidConfig("need at least one conv stage and one dense layer")
    if min(cfg.conv_filters) < 1 or min(cfg.dense_widths) < 1:
        raise InvalidConfig("layer widths must be positive")
    if not 0.0 <= cfg.dropout < 1.0:
        raise InvalidConfig("dropout rate must lie in [0, 1)")
    fh, fw = _feature_size(cfg)
    if fh < 1 or fw < 1:
        raise InvalidConfig(f"input {cfg.input_size} too small for {len(cfg.conv_filters)} pooling stages")


def _feature_size(cfg) -> tuple[int, int]:
    h, w = cfg.input_size
    for _ in cfg.conv_filters:
        h, w = h // 2, w // 2
    return h, w


def config_from_dict(kind: str, d: dict):
    cls = ClassifierConfig if kind == "classifier" else RegressorConfig
    d = dict(d)
    d.pop("output_dim", None)
    known = set(cls.__dataclass_fields__) - {"output_dim"}
    unknown = set(d) - known
    if unknown:
        raise InvalidConfig(f"unknown {kind} config keys: {sorted(unknown)}")
    for key in ("input_size", "conv_filters", "dense_widths"):
        if key in d:
            d[key] = tuple(int(v) for v in d[key])
    return cls(**d)


class Network:
    """Parameters and running statistics shared by both model kinds."""

    kind = ""

    def __init__(self, cfg, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        self.stats: dict[str, F.RunningStats] = {}
        self.meta: dict = {}
        self._rng = numpy_rng(seed)
        c = 3
        for i, f in enumerate(cfg.conv_filters):
            self._add_weight(f"conv{i}.kernel", (3, 3, c, f), fan_in=9 * c)
            self._add_zeros(f"conv{i}.bias", f)
            if cfg.batch_norm:
                self._add_bn(f"conv{i}.bn", f)
            c = f

    def _add_weight(self, name, shape, fan_in):
        limit = np.sqrt(6.0 / fan_in)
        self.params[name] = Tensor(self._rng.uniform(-limit, limit, size=shape), requires_grad=True, name=name)

    def _add_zeros(self, name, n):
        self.params[name] = Tensor(np.zeros(n), requires_grad=True, name=name)

    def _add_bn(self, prefix, n):
        self.params[f"{prefix}.gamma"] = Tensor(np.ones(n), requires_grad=True)
        self.params[f"{prefix}.beta"] = Tensor(np.zeros(n), requires_grad=True)
        self.stats[prefix] = F.RunningStats.create(n)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def named_arrays(self) -> dict[str, np.ndarray]:
        """Every array stored in a checkpoint, in a fixed order."""
        out = {k: v.data for k, v in self.params.items()}
        for k, s in self.stats.items():
            out[f"{k}.running_mean"] = s.mean
            out[f"{k}.running_var"] = s.var
        return out

    def _bn(self, prefix, x, train):
        return F.batchnorm(x, self.params[f"{prefix}.gamma"], self.params[f"{prefix}.beta"], train,
                           self.stats[prefix])

    def _backbone(self, x: Tensor, train: bool) -> Tensor:
        for i in range(len(self.cfg.conv_filters)):
            x = F.conv2d(x, self.params[f"conv{i}.kernel"], self.params[f"conv{i}.bias"], 1, "same")
            if self.cfg.batch_norm:
                x = self._bn(f"conv{i}.bn", x, train)
            x = F.max_pool2d(F.relu(x), 2)
        return x

    @staticmethod
    def _input(images) -> Tensor:
        if isinstance(images, Tensor):
            return images
        arr = np.asarray(images)
        if arr.dtype == np.uint8:
            arr = arr.astype(np.float64) / 255.0
        return Tensor(arr)


class SceneClassifier(Network):
    kind = "classifier"

    def __init__(self, cfg: ClassifierConfig = ClassifierConfig(), seed: int = 0):
        super().__init__(cfg, seed)
        width = cfg.conv_filters[-1]
        for i, d in enumerate(cfg.dense_widths):
            self._add_weight(f"dense{i}.weight", (width, d), fan_in=width)
            self._add_zeros(f"dense{i}.bias", d)
            width = d
        self._add_weight("out.weight", (width, cfg.num_classes), fan_in=width)
        self._add_zeros("out.bias", cfg.num_classes)

    def forward(self, images, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Logits ``[n, num_classes]``."""
        x = F.global_avg_pool(self._backbone(self._input(images), train))
        for i in range(len(self.cfg.dense_widths)):
            x = F.swish(F.dense(x, self.params[f"dense{i}.weight"], self.params[f"dense{i}.bias"]))
            x = F.dropout(x, self.cfg.dropout, train, rng)
        return F.dense(x, self.params["out.weight"], self.params["out.bias"])

    def predict_proba(self, images) -> np.ndarray:
        return F.softmax_np(self.forward(images, train=False).data)


class PoseRegressor(Network):
    kind = "regressor"

    def __init__(self, cfg: RegressorConfig = RegressorConfig(), seed: int = 0):
        super().__init__(cfg, seed)
        fh, fw = _feature_size(cfg)
        self.pool = fh // cfg.head_grid
        width = cfg.conv_filters[-1] * cfg.head_grid * cfg.head_grid
        for i, d in enumerate(cfg.dense_widths):
            self._add_weight(f"dense{i}.weight", (width, d), fan_in=width)
            self._add_zeros(f"dense{i}.bias", d)
            if cfg.batch_norm:
                self._add_bn(f"dense{i}.bn", d)
            width = d
        self._add_weight("out.weight", (width, 7), fan_in=width)
        self._add_zeros("out.bias", 7)

    def forward_with_activations(self, images, train: bool = False,
                                 rng: np.random.Generator | None = None) -> tuple[Tensor, list[Tensor]]:
        x = self._backbone(self._input(images), train)
        if self.pool > 1:
            x = F.avg_pool2d(x, self.pool)
        x = F.flatten(x)
        acts = []
        for i in range(len(self.cfg.dense_widths)):
            W = F.dropconnect(self.params[f"dense{i}.weight"], self.cfg.dropconnect, train, rng)
            x = F.dense(x, W, self.params[f"dense{i}.bias"])
            if self.cfg.batch_norm:
                x = self._bn(f"dense{i}.bn", x, train)
            x = F.relu(x)
            acts.append(x)
            x = F.dropout(x, self.cfg.dropout, train, rng)
        return F.dense(x, self.params["out.weight"], self.params["out.bias"]), acts

    def forward(self, images, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Raw outputs ``[n, 7]``."""
        return self.forward_with_activations(images, train, rng)[0]

    def predict_raw(self, images) -> np.ndarray:
        return self.forward(images, train=False).data

    def loss(self, images, positions_norm, quats, train: bool = True,
             rng: np.random.Generator | None = None) -> Tensor:
        out, acts = self.forward_with_activations(images, train, rng)
        loss = F.pose_loss(out[:, :3], out[:, 3:], positions_norm, quats, self.cfg.beta)
        if self.cfg.activity_penalty > 0:
            loss = loss + F.activity_penalty(acts, self.cfg.activity_penalty)
        return loss


def build_classifier(cfg: ClassifierConfig = ClassifierConfig(), seed: int = 0) -> SceneClassifier:
    return SceneClassifier(cfg, seed)


def build_regressor(cfg: RegressorConfig = RegressorConfig(), seed: int = 0) -> PoseRegressor:
    return PoseRegressor(cfg, seed)


# checkpoints ---------------------------------------------------------------

def _u32(n: int) -> bytes:
    return struct.pack("<I", n)


def checkpoint_bytes(model: Network) -> bytes:
    header = {"config": asdict(model.cfg), "meta": model.meta}
    text = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC + _u32(FORMAT_VERSION) + bytes([KINDS[model.kind]]))
    buf.write(_u32(len(text)) + text)
    for name, arr in model.named_arrays().items():
        raw = name.encode("utf-8")
        buf.write(_u32(len(raw)) + raw + _u32(arr.ndim))
        for d in arr.shape:
            buf.write(_u32(d))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(model: Network, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    try:
        tmp.write_bytes(checkpoint_bytes(model))
        tmp.replace(path)
    finally:
        tmp.unlink(missing_ok=True)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    @property
    def done(self) -> bool:
        return self.pos == len(self.data)


def load_checkpoint_bytes(data: bytes, expect_kind: str | None = None) -> Network:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CorruptCheckpoint("not an ICPS checkpoint (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format {version}, expected {FORMAT_VERSION}")
    kind_byte = r.take(1)[0]
    kinds = {v: k for k, v in KINDS.items()}
    if kind_byte not in kinds:
        raise CorruptCheckpoint(f"unknown model kind byte {kind_byte}")
    kind = kinds[kind_byte]
    if expect_kind is not None and kind != expect_kind:
        raise ModelKindMismatch(f"checkpoint holds a {kind}, expected a {expect_kind}")
    try:
        header = json.loads(r.take(r.u32()).decode("utf-8"))
        cfg = config_from_dict(kind, header["config"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"unreadable checkpoint header: {exc}") from exc
    model = build_classifier(cfg) if kind == "classifier" else build_regressor(cfg)
    model.meta = header.get("meta", {})
    expected = model.named_arrays()
    seen = set()
    while not r.done:
        try:
            name = r.take(r.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptCheckpoint("bad tensor name") from exc
        shape = tuple(r.u32() for _ in range(r.u32()))
        values = np.frombuffer(r.take(8 * int(np.prod(shape, dtype=np.int64))), dtype="<f8")
        if name not in expected:
            raise CorruptCheckpoint(f"unexpected tensor {name!r}")
        if shape != expected[name].shape:
            raise ShapeMismatch(f"{name}: stored shape {shape}, architecture expects {expected[name].shape}")
        expected[name][...] = values.reshape(shape)
        seen.add(name)
    missing = set(expected) - seen
    if missing:
        raise CorruptCheckpoint(f"checkpoint is missing tensors: {sorted(missing)}")
    return model


def load_checkpoint(path, expect_kind: str | None = None) -> Network:
    return load_checkpoint_bytes(Path(path).read_bytes(), expect_kind)


def regressor_bounds(model: PoseRegressor) -> dict[int, NormalizationBounds]:
    return {int(k): NormalizationBounds.from_dict(v) for k, v in model.meta.get("bounds", {}).items()}
