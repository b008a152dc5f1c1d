"""HTTP front end wrapping the explanation engine.

Models are loaded once (binding weights is the expensive part) and kept in an
in-memory registry; predict / explain / decompose requests then run against a
bound, immutable network. Clip paths and output directories refer to the
server's filesystem.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, pipeline
from ..errors import VrelError
from ..network import Network
from .schemas import (DecomposeRequest, DecomposeResponse, ExplainRequest, ExplainResponse,
                      LoadModelRequest, ModelInfo, PredictRequest, PredictResponse)


@dataclass
class ModelRegistry:
    models: dict[str, tuple[Network, np.ndarray]] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)
    _counter: int = 0

    def add(self, net: Network, mean: np.ndarray) -> str:
        with self._lock:
            self._counter += 1
            model_id = f"m{self._counter}"
            self.models[model_id] = (net, mean)
        return model_id

    def get(self, model_id: str) -> tuple[Network, np.ndarray]:
        try:
            return self.models[model_id]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown model {model_id!r}") from None


def _info(model_id: str, net: Network) -> ModelInfo:
    return ModelInfo(model_id=model_id, name=net.name, input_shape=list(net.input_shape),
                     num_classes=net.num_classes, num_layers=len(net.layers))


def create_app() -> FastAPI:
    app = FastAPI(title="vrel", version=__version__,
                  description="3D CNN relevance explanations with discriminative "
                              "spatio-temporal decomposition")
    registry = ModelRegistry()
    app.state.registry = registry

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/models", response_model=list[ModelInfo])
    def list_models():
        return [_info(mid, net) for mid, (net, _) in registry.models.items()]

    @app.post("/models", response_model=ModelInfo)
    def load_model(req: LoadModelRequest):
        try:
            net = pipeline.load_network(req.arch_path, req.weights_path)
            mean = pipeline.resolve_mean(req.mean, net.input_shape[0])
        except (VrelError, FileNotFoundError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return _info(registry.add(net, mean), net)

    @app.post("/models/{model_id}/predict", response_model=PredictResponse)
    def predict(model_id: str, req: PredictRequest):
        net, mean = registry.get(model_id)
        try:
            result = pipeline.run_predict(net, req.clip_path, mean=mean, top=req.top)
        except (VrelError, FileNotFoundError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {"model_id": model_id, **result}

    @app.post("/models/{model_id}/explain", response_model=ExplainResponse)
    def explain_clip(model_id: str, req: ExplainRequest):
        net, mean = registry.get(model_id)
        try:
            result = pipeline.run_explain(net, req.clip_path, out_dir=req.out_dir,
                                          alpha=req.alpha, beta=req.beta, eps=req.eps,
                                          target=_target(req.target), mean=mean, emit=req.emit)
        except (VrelError, FileNotFoundError, OSError, ValueError, IndexError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {"model_id": model_id, **result}

    @app.post("/models/{model_id}/decompose", response_model=DecomposeResponse)
    def decompose_clip(model_id: str, req: DecomposeRequest):
        net, mean = registry.get(model_id)
        try:
            result = pipeline.run_decompose(net, req.clip_path, out_dir=req.out_dir,
                                            alpha=req.alpha, beta=req.beta, eps=req.eps,
                                            target=_target(req.target), mean=mean, emit=req.emit)
        except (VrelError, FileNotFoundError, OSError, ValueError, IndexError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {"model_id": model_id, **result}

    return app


def _target(value: int | str) -> int | str:
    if value == "argmax":
        return value
    try:
        return int(value)
    except (TypeError, ValueError):
        raise HTTPException(status_code=422,
                            detail=f"target must be 'argmax' or an int, got {value!r}") from None
