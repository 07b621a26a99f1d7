import json
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Extra, Field, ValidationError, root_validator, validator

from config import presets
from config.config import DEFAULT_DTYPE, LNET_DIVISOR
from utils.errors import ConfigError


class StrictModel(BaseModel):
    """Base model for every RunConfig section: unknown keys are rejected"""

    class Config:
        extra = Extra.forbid
        validate_assignment = True


class ModelConfig(StrictModel):
    """Architecture of the two-stream network"""
    lnet_height: int = 256
    lnet_width: int = 256
    local_radius: Dict[str, int] = Field(
        default_factory=lambda: {level: presets.DEFAULT_LOCAL_RADIUS for level in presets.LOCAL_LEVELS}
    )
    cyclic_consistency: bool = True
    iterative_refinement: bool = True
    cost_volume_order: str = "l2_then_relu"
    normalize_local_features: bool = True
    backbone_variant: str = "toy"
    backbone_channels: List[int] = Field(default_factory=lambda: list(presets.TOY_BACKBONE_CHANNELS))
    backbone_weights: Optional[str] = None
    mapping_channels: List[int] = Field(default_factory=lambda: list(presets.MAPPING_DECODER_CHANNELS))
    decoder_channels: List[int] = Field(default_factory=lambda: list(presets.FLOW_DECODER_CHANNELS))
    refinement_channels: List[int] = Field(default_factory=lambda: list(presets.REFINEMENT_CHANNELS))
    refinement_levels: List[str] = Field(default_factory=lambda: list(presets.REFINED_LEVELS))
    dtype: str = DEFAULT_DTYPE
    seed: int = 0

    @validator("lnet_height", "lnet_width")
    def lnet_divisible(cls, value):
        if value < LNET_DIVISOR or value % LNET_DIVISOR:
            raise ValueError(f"must be a positive multiple of {LNET_DIVISOR}")
        return value

    @validator("local_radius")
    def radius_per_level(cls, value):
        missing = set(presets.LOCAL_LEVELS) - set(value)
        if missing:
            raise ValueError(f"missing radius for levels {sorted(missing)}")
        unknown = set(value) - set(presets.LOCAL_LEVELS)
        if unknown:
            raise ValueError(f"unknown levels {sorted(unknown)}")
        if any(radius < 1 for radius in value.values()):
            raise ValueError("radius must be >= 1")
        return value

    @validator("cost_volume_order")
    def known_order(cls, value):
        if value not in ("l2_then_relu", "relu_then_l2"):
            raise ValueError("expected 'l2_then_relu' or 'relu_then_l2'")
        return value

    @validator("backbone_variant")
    def known_variant(cls, value):
        if value not in ("toy", "fixed"):
            raise ValueError("expected 'toy' or 'fixed'")
        return value

    @validator("backbone_channels")
    def four_stages(cls, value):
        if len(value) != 4 or any(c < 1 for c in value):
            raise ValueError("expected 4 positive stage widths")
        return value

    @validator("mapping_channels", "decoder_channels")
    def five_layers(cls, value):
        if len(value) != 5 or any(c < 1 for c in value):
            raise ValueError("expected 5 positive layer widths")
        return value

    @validator("refinement_channels")
    def six_layers(cls, value):
        if len(value) != 6 or any(c < 1 for c in value):
            raise ValueError("expected 6 positive layer widths")
        return value

    @validator("refinement_levels")
    def refined_levels(cls, value):
        if not set(value) <= set(presets.REFINED_LEVELS):
            raise ValueError(f"refinement only allowed at {presets.REFINED_LEVELS}")
        return value

    @validator("dtype")
    def known_dtype(cls, value):
        if value not in ("float32", "float64"):
            raise ValueError("expected 'float32' or 'float64'")
        return value

    @root_validator(skip_on_failure=True)
    def fixed_needs_weights(cls, values):
        if values.get("backbone_variant") == "fixed" and not values.get("backbone_weights"):
            raise ValueError("backbone_variant 'fixed' requires backbone_weights")
        return values

    @classmethod
    def desk_scale(cls, **overrides) -> "ModelConfig":
        """Small configuration used for desk-scale training and the test-suite"""
        preset = dict(presets.DESK_SCALE)
        size = preset.pop("lnet_size")
        fields = {"lnet_height": size, "lnet_width": size, **preset}
        fields.update(overrides)
        return cls(**fields)


class AffineRanges(StrictModel):
    rotation_deg: float = presets.TRANSFORM_RANGES["affine"]["rotation_deg"]
    scale: List[float] = Field(default_factory=lambda: list(presets.TRANSFORM_RANGES["affine"]["scale"]))
    shear: float = presets.TRANSFORM_RANGES["affine"]["shear"]
    translation: float = presets.TRANSFORM_RANGES["affine"]["translation"]

    @validator("scale")
    def scale_interval(cls, value):
        if len(value) != 2 or value[0] <= 0 or value[0] > value[1]:
            raise ValueError("expected [low, high] with 0 < low <= high")
        return value

    @validator("rotation_deg", "shear", "translation")
    def non_negative(cls, value):
        if value < 0:
            raise ValueError("must be >= 0")
        return value


class HomographyRanges(StrictModel):
    corner_perturbation: float = presets.TRANSFORM_RANGES["homography"]["corner_perturbation"]

    @validator("corner_perturbation")
    def bounded(cls, value):
        if not 0 <= value < 0.5:
            raise ValueError("must lie in [0, 0.5)")
        return value


class TpsRanges(StrictModel):
    grid_size: int = presets.TRANSFORM_RANGES["tps"]["grid_size"]
    jitter: float = presets.TRANSFORM_RANGES["tps"]["jitter"]
    regularization: float = presets.TRANSFORM_RANGES["tps"]["regularization"]

    @validator("grid_size")
    def at_least_two(cls, value):
        if value < 2:
            raise ValueError("must be >= 2")
        return value

    @validator("jitter", "regularization")
    def non_negative(cls, value):
        if value < 0:
            raise ValueError("must be >= 0")
        return value


class TransformConfig(StrictModel):
    """Ranges of the random synthetic warps"""
    kinds: List[str] = Field(default_factory=lambda: list(presets.TRANSFORM_KINDS))
    affine: AffineRanges = Field(default_factory=AffineRanges)
    homography: HomographyRanges = Field(default_factory=HomographyRanges)
    tps: TpsRanges = Field(default_factory=TpsRanges)
    max_retries: int = presets.MAX_TRANSFORM_RETRIES

    @validator("kinds")
    def known_kinds(cls, value):
        if not value or not set(value) <= set(presets.TRANSFORM_KINDS):
            raise ValueError(f"expected a non-empty subset of {presets.TRANSFORM_KINDS}")
        return value

    @classmethod
    def identity(cls, kinds: Optional[List[str]] = None) -> "TransformConfig":
        """Zero-width ranges: every sampled transform is the identity"""
        return cls(
            kinds=kinds or list(presets.TRANSFORM_KINDS),
            affine=AffineRanges(rotation_deg=0.0, scale=[1.0, 1.0], shear=0.0, translation=0.0),
            homography=HomographyRanges(corner_perturbation=0.0),
            tps=TpsRanges(jitter=0.0),
        )


class TrainConfig(StrictModel):
    """Hyperparameters of the multi-scale training loop"""
    level_weights: List[float] = Field(default_factory=lambda: list(presets.LEVEL_WEIGHTS))
    weight_decay: float = presets.WEIGHT_DECAY
    batch_size: int = presets.BATCH_SIZE
    learning_rate: float = presets.LEARNING_RATE
    lr_milestones: List[int] = Field(default_factory=list)
    lr_gamma: float = 0.5
    iterations: int = 1000
    log_every: int = 50
    seed: int = 0

    @validator("level_weights")
    def four_non_negative(cls, value):
        if len(value) != len(presets.PYRAMID_LEVELS):
            raise ValueError(f"expected {len(presets.PYRAMID_LEVELS)} level weights")
        if any(alpha < 0 for alpha in value):
            raise ValueError("level weights must be >= 0")
        return value

    @validator("batch_size", "iterations", "log_every")
    def positive(cls, value):
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @validator("learning_rate", "weight_decay")
    def non_negative(cls, value):
        if value < 0:
            raise ValueError("must be >= 0")
        return value


class RunConfig(StrictModel):
    """Top-level JSON document keying every configurable"""
    model: ModelConfig = Field(default_factory=ModelConfig)
    transforms: TransformConfig = Field(default_factory=TransformConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)

    @classmethod
    def load(cls, path: Optional[Union[str, Path]]) -> "RunConfig":
        """
        Load a RunConfig from a JSON file

        Args:
            path: JSON file, or None for all defaults

        Returns:
            Validated RunConfig
        """
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            return cls.parse_obj(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        except ValidationError as e:
            raise ConfigError(f"invalid config {path}: {e}") from e
