"""Request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class LoadModelRequest(BaseModel):
    arch_path: str = Field(description="Path to a JSON architecture config on the server")
    weights_path: str = Field(description="Path to a VRELW001 weight container on the server")
    mean: list[float] | None = Field(default=None,
                                     description="Per-channel normalization mean (1 or C values)")


class ModelInfo(BaseModel):
    model_id: str
    name: str
    input_shape: list[int]
    num_classes: int
    num_layers: int


class Prediction(BaseModel):
    class_index: int = Field(alias="class")
    logit: float

    model_config = {"populate_by_name": True}


class PredictRequest(BaseModel):
    clip_path: str
    top: int = 5


class PredictResponse(BaseModel):
    model_id: str
    predictions: list[Prediction]


class ExplainRequest(BaseModel):
    clip_path: str
    alpha: float = 1.0
    beta: float = 0.0
    eps: float = 1e-9
    target: int | str = "argmax"
    out_dir: str | None = None
    emit: list[str] | None = None


class ExplainResponse(BaseModel):
    model_id: str
    target_class: int
    target_logit: float
    relevance_sum: float
    outputs: dict[str, str]


class DecomposeRequest(ExplainRequest):
    pass


class DecomposeResponse(BaseModel):
    model_id: str
    target_class: int
    target_logit: float
    per_frame_predictions: list[int]
    abs_sums: dict[str, float]
    explanation_passes: int
    outputs: dict[str, str]
