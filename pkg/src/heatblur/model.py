"""Model container, inference with activation recording, input gradients, and disk round-trips.

The on-disk format is a JSON manifest next to a flat weight blob of
little-endian 32-bit floats, concatenated layer by layer in declaration
order (dense: weights row-major [out][in] then biases [out]; conv:
[out_ch][in_ch][kh][kw] then biases [out_ch]).  In memory everything is
float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageops import validate_image
from .layers import AvgPool2D, Conv2D, Dense, Flatten, Layer, MaxPool2D, ReLU

__all__ = [
    "Model",
    "ModelError",
    "ModelLoadError",
    "Prediction",
    "ActivationTrace",
    "softmax",
    "forward",
    "input_gradient",
    "save_model",
    "load_model",
]


class ModelError(ValueError):
    """Invalid architecture: incompatible shapes or class count."""


class ModelLoadError(Exception):
    """Manifest or weight blob cannot be turned into a model."""


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


@dataclass
class Prediction:
    """Logits, softmax probabilities, and class indices by descending probability.

    Ties in probability are broken by ascending class index.
    """

    logits: np.ndarray
    probabilities: np.ndarray
    ranking: np.ndarray

    @property
    def top1(self) -> int:
        return int(self.ranking[0])


@dataclass
class ActivationTrace:
    """Per-layer input arrays recorded during one forward pass."""

    layer_inputs: list

    def __len__(self) -> int:
        return len(self.layer_inputs)


class Model:
    """Ordered layer stack with class names and a fixed input shape.

    Construction validates the shape chain end to end and that the final
    output is one logit per class name.  Models are treated as immutable
    after construction or training and may be shared across workers.
    """

    def __init__(self, layers, class_names, input_shape):
        self.layers: list[Layer] = list(layers)
        self.class_names = [str(name) for name in class_names]
        self.input_shape = tuple(int(v) for v in input_shape)
        self._validate()

    def _validate(self):
        if len(self.input_shape) != 3:
            raise ModelError(f"input shape must be (height, width, channels), got {self.input_shape}")
        if not self.class_names:
            raise ModelError("model needs at least one class name")
        shape = self.input_shape
        for idx, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ValueError as exc:
                raise ModelError(f"layer {idx} ({layer.kind}): {exc}") from exc
        if shape != (len(self.class_names),):
            raise ModelError(
                f"final output shape {shape} does not match the {len(self.class_names)} class names"
            )

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def trainable_layers(self):
        return [layer for layer in self.layers if layer.trainable]


def forward(model: Model, image) -> tuple[Prediction, ActivationTrace]:
    """Run inference, recording every layer input for relevance and gradient passes."""
    x = validate_image(image)
    if x.shape != model.input_shape:
        raise ValueError(f"image shape {x.shape} does not match model input {model.input_shape}")
    inputs = []
    for layer in model.layers:
        inputs.append(x)
        x = layer.forward(x)
    probabilities = softmax(x)
    ranking = np.argsort(-probabilities, kind="stable")
    return Prediction(x, probabilities, ranking), ActivationTrace(inputs)


def input_gradient(model: Model, image, class_index: int, objective: str = "cross_entropy") -> np.ndarray:
    """Exact reverse-mode gradient of a scalar objective with respect to the pixels.

    objective "logit" differentiates the raw class logit; "cross_entropy"
    differentiates the cross-entropy loss against the class.  Max pooling
    routes the gradient to the first-occurring argmax position.
    """
    if not 0 <= int(class_index) < model.num_classes:
        raise ValueError(f"class index {class_index} out of range for {model.num_classes} classes")
    prediction, trace = forward(model, image)
    one_hot = np.zeros(model.num_classes)
    one_hot[int(class_index)] = 1.0
    if objective == "logit":
        grad = one_hot
    elif objective == "cross_entropy":
        grad = prediction.probabilities - one_hot
    else:
        raise ValueError(f"unknown objective {objective!r}, expected 'logit' or 'cross_entropy'")
    for layer, layer_input in zip(reversed(model.layers), reversed(trace.layer_inputs)):
        grad = layer.backward_input(layer_input, grad)
    return grad


# --- serialization ---------------------------------------------------------

_MANIFEST_FORMAT = "heatblur-model"


def _manifest_entry(layer: Layer) -> dict:
    if isinstance(layer, Dense):
        return {"kind": "dense", "in_size": layer.in_size, "out_size": layer.out_size}
    if isinstance(layer, Conv2D):
        return {
            "kind": "conv2d",
            "in_channels": layer.in_channels,
            "out_channels": layer.out_channels,
            "kernel_height": layer.kernel_height,
            "kernel_width": layer.kernel_width,
            "stride": layer.stride,
            "padding": layer.padding,
        }
    if isinstance(layer, (MaxPool2D, AvgPool2D)):
        return {"kind": layer.kind, "window": layer.window, "stride": layer.stride}
    if isinstance(layer, (ReLU, Flatten)):
        return {"kind": layer.kind}
    raise ModelError(f"layer kind {layer.kind!r} has no manifest form")


def _layer_from_entry(entry: dict, idx: int) -> Layer:
    kind = entry.get("kind")
    fields = {k: v for k, v in entry.items() if k != "kind"}
    try:
        if kind == "dense":
            return Dense(**fields)
        if kind == "conv2d":
            return Conv2D(**fields)
        if kind == "relu":
            return ReLU(**fields)
        if kind == "maxpool2d":
            return MaxPool2D(**fields)
        if kind == "avgpool2d":
            return AvgPool2D(**fields)
        if kind == "flatten":
            return Flatten(**fields)
    except (TypeError, ValueError) as exc:
        raise ModelLoadError(f"layer {idx} ({kind}): {exc}") from exc
    raise ModelLoadError(f"layer {idx}: unknown layer kind {kind!r}")


def save_model(model: Model, manifest_path) -> Path:
    """Write the JSON manifest and the float32 weight blob next to it."""
    manifest_path = Path(manifest_path)
    weights_name = manifest_path.stem + ".weights.bin"
    doc = {
        "format": _MANIFEST_FORMAT,
        "version": 1,
        "input_shape": list(model.input_shape),
        "class_names": model.class_names,
        "weights_file": weights_name,
        "layers": [_manifest_entry(layer) for layer in model.layers],
    }
    blob = bytearray()
    for layer in model.layers:
        if layer.trainable:
            blob += layer.flatten_weights().astype("<f4").tobytes()
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    (manifest_path.parent / weights_name).write_bytes(bytes(blob))
    return manifest_path


def load_model(manifest_path) -> Model:
    """Load a manifest + weight blob pair, failing loudly on any inconsistency.

    Weights are stored as 32-bit floats, so a save -> load cycle of a
    freshly trained float64 model quantizes once; thereafter round trips
    are bit-identical.
    """
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ModelLoadError(f"cannot read manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelLoadError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != _MANIFEST_FORMAT:
        raise ModelLoadError(f"manifest {manifest_path} is not a {_MANIFEST_FORMAT} document")
    for key in ("input_shape", "class_names", "weights_file", "layers"):
        if key not in doc:
            raise ModelLoadError(f"manifest {manifest_path} is missing key {key!r}")

    layers = [_layer_from_entry(entry, idx) for idx, entry in enumerate(doc["layers"])]

    blob_path = manifest_path.parent / doc["weights_file"]
    try:
        raw = blob_path.read_bytes()
    except OSError as exc:
        raise ModelLoadError(f"cannot read weight blob {blob_path}: {exc}") from exc
    if len(raw) % 4:
        raise ModelLoadError(f"weight blob {blob_path} length {len(raw)} is not a multiple of 4 bytes")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64)

    offset = 0
    for idx, layer in enumerate(layers):
        if not layer.trainable:
            continue
        need = layer.weight_count()
        available = len(values) - offset
        if available < need:
            raise ModelLoadError(
                f"layer {idx} ({layer.kind}): expected {need} weight values, "
                f"only {available} left in blob"
            )
        layer.load_weights(values[offset : offset + need])
        offset += need
    if offset != len(values):
        raise ModelLoadError(f"weight blob has {len(values) - offset} unused trailing values")

    try:
        return Model(layers, doc["class_names"], doc["input_shape"])
    except ModelError as exc:
        raise ModelLoadError(str(exc)) from exc
