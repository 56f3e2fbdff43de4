"""Encoder backends: fixed-window models turning audio into frame embeddings.

A backend consumes exactly one window of ``window_s`` seconds of mono audio
at ``sample_rate`` and returns one frame matrix per requested layer. Layer
index 0 is the encoder's input embedding; ``n_layers - 1`` is the final
output. Backends must be deterministic: the same samples always produce the
same bytes, which is what makes re-extraction reproducible.
"""

from typing import Protocol, Sequence

import numpy as np


class BackendError(RuntimeError):
    """The encoder model could not be loaded or run."""


class EncoderBackend(Protocol):
    name: str
    sample_rate: int
    window_s: float
    frame_rate_hz: float
    dim: int
    n_layers: int

    def encode(self, window: np.ndarray, layers: Sequence[int]) -> dict[int, np.ndarray]:
        """Embed one full window; returns layer -> (frames, dim) float32."""
        ...


class SyntheticBackend:
    """Deterministic stand-in encoder with no model download.

    Each output frame is a fixed random projection of its 20 ms slice of
    samples through a tanh, with a per-layer bias so silence does not map
    to the zero vector and different layers produce different files. Content
    dependent, deterministic, and fast; exists so the extraction pipeline is
    testable end to end.
    """

    def __init__(self, dim: int = 16, n_layers: int = 4):
        if dim < 2 or n_layers < 1:
            raise ValueError(f"need dim >= 2 and n_layers >= 1, got {dim}, {n_layers}")
        self.name = "synthetic"
        self.sample_rate = 16000
        self.window_s = 30.0
        self.frame_rate_hz = 50.0
        self.dim = dim
        self.n_layers = n_layers
        self._hop = round(self.sample_rate / self.frame_rate_hz)
        rng = np.random.default_rng(1729)
        self._proj = rng.standard_normal((n_layers, self._hop, dim)) / np.sqrt(self._hop)
        self._bias = rng.standard_normal((n_layers, dim)) * 0.1

    def encode(self, window: np.ndarray, layers: Sequence[int]) -> dict[int, np.ndarray]:
        expected = round(self.window_s * self.sample_rate)
        if window.shape != (expected,):
            raise ValueError(f"window must hold {expected} samples, got {window.shape}")
        slices = np.asarray(window, dtype=np.float64).reshape(-1, self._hop)
        out = {}
        for layer in layers:
            feats = np.tanh(slices @ self._proj[layer] + self._bias[layer])
            out[layer] = feats.astype(np.float32)
        return out


class WhisperBackend:
    """Embeddings from a Whisper encoder via transformers.

    Operates on the model's native 30 s window; the mel frontend runs at
    100 frames/s and the encoder's convolutional stem halves that, giving
     50 embedding frames per second for the standard configuration. Inference
    runs in eval mode under no_grad on CPU, which is deterministic.
    """

    def __init__(self, model, feature_extractor, name: str):
        import torch

        self._torch = torch
        self._model = model.eval()
        self._fe = feature_extractor
        config = model.config
        self.name = name
        self.sample_rate = int(feature_extractor.sampling_rate)
        self.window_s = float(feature_extractor.chunk_length)
        self.frame_rate_hz = self.sample_rate / feature_extractor.hop_length / 2.0
        self.dim = int(config.d_model)
        self.n_layers = int(config.encoder_layers) + 1

    @classmethod
    def from_pretrained(cls, model_id: str) -> "WhisperBackend":
        try:
            from transformers import WhisperFeatureExtractor, WhisperModel
        except ImportError as exc:
            raise BackendError(f"transformers is not installed: {exc}") from None
        try:
            model = WhisperModel.from_pretrained(model_id)
            fe = WhisperFeatureExtractor.from_pretrained(model_id)
        except Exception as exc:
            raise BackendError(f"cannot load encoder {model_id!r}: {exc}") from None
        return cls(model, fe, name=model_id)

    def encode(self, window: np.ndarray, layers: Sequence[int]) -> dict[int, np.ndarray]:
        expected = round(self.window_s * self.sample_rate)
        if window.shape != (expected,):
            raise ValueError(f"window must hold {expected} samples, got {window.shape}")
        features = self._fe(
            window.astype(np.float32),
            sampling_rate=self.sample_rate,
            return_tensors="pt",
        ).input_features
        with self._torch.no_grad():
            states = self._model.encoder(features, output_hidden_states=True).hidden_states
        return {layer: states[layer][0].numpy().astype(np.float32) for layer in layers}


def load_backend(model: str) -> EncoderBackend:
    """Resolve a model identifier: "synthetic" or a Whisper checkpoint id."""
    if model == "synthetic":
        return SyntheticBackend()
    return WhisperBackend.from_pretrained(model)
