from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, validator

MAX_SEED = 2 ** 64 - 1


class SpecModel(BaseModel):
    """Base for layer specs: immutable, unknown keys rejected"""

    class Config:
        extra = 'forbid'
        allow_mutation = False


class Conv2DSpec(SpecModel):
    """Schema for a 2D convolution layer"""
    kind: Literal['conv2d'] = 'conv2d'
    n_f: int = Field(..., ge=1, description="Number of filters")
    f: int = Field(..., ge=1, description="Kernel side length")
    s: int = Field(1, ge=1, description="Stride")
    p: int = Field(0, ge=0, description="Zero padding per side")
    in_channels: int = Field(..., ge=1, description="Input channel count")
    connectivity: Optional[Tuple[Tuple[bool, ...], ...]] = Field(
        None, description="n_f x in_channels table; absent means fully connected"
    )

    @validator('connectivity')
    def validate_connectivity(cls, v, values):
        """Validate the table dimensions and that every filter sees a channel"""
        if v is None:
            return v
        if 'n_f' not in values or 'in_channels' not in values:
            return v
        if len(v) != values['n_f']:
            raise ValueError(f"Connectivity needs {values['n_f']} rows, got {len(v)}")
        for row_index, row in enumerate(v):
            if len(row) != values['in_channels']:
                raise ValueError(f"Connectivity row {row_index} needs {values['in_channels']} entries, got {len(row)}")
            if not any(row):
                raise ValueError(f"Connectivity row {row_index} has no connected channel")
        return v


class PoolSpec(SpecModel):
    """Schema for a max pooling layer"""
    kind: Literal['maxpool'] = 'maxpool'
    extent: int = Field(2, ge=1, description="Spatial extent of the window")
    stride: int = Field(2, ge=1, description="Step between windows")
    trainable_affine: bool = Field(False, description="Per-channel coefficient and bias after the max")


class ReluSpec(SpecModel):
    kind: Literal['relu'] = 'relu'


class FlattenSpec(SpecModel):
    kind: Literal['flatten'] = 'flatten'


class DenseSpec(SpecModel):
    """Schema for a fully connected layer"""
    kind: Literal['dense'] = 'dense'
    in_features: int = Field(..., ge=1)
    out_features: int = Field(..., ge=1)


class SoftmaxSpec(SpecModel):
    kind: Literal['softmax'] = 'softmax'


LayerSpec = Annotated[
    Union[Conv2DSpec, PoolSpec, ReluSpec, FlattenSpec, DenseSpec, SoftmaxSpec],
    Field(discriminator='kind'),
]


class TrainConfig(BaseModel):
    """Schema for optimizer and loop settings"""
    epochs: int = Field(30, ge=1, description="Number of passes over the training split")
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(0.01, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    seed: int = Field(0, ge=0, le=MAX_SEED, description="Root of all training randomness")
    shuffle_each_epoch: bool = True

    class Config:
        extra = 'forbid'


class PartialTrainConfig(BaseModel):
    """TrainConfig overrides from a config file; every field optional"""
    epochs: Optional[int] = Field(None, ge=1)
    batch_size: Optional[int] = Field(None, ge=1)
    learning_rate: Optional[float] = Field(None, gt=0)
    momentum: Optional[float] = Field(None, ge=0, lt=1)
    seed: Optional[int] = Field(None, ge=0, le=MAX_SEED)
    shuffle_each_epoch: Optional[bool] = None

    class Config:
        extra = 'forbid'


class RunConfigFile(BaseModel):
    """Schema for the optional JSON config file"""
    train: PartialTrainConfig = Field(default_factory=PartialTrainConfig)
    architecture: Optional[List[LayerSpec]] = None
    input_shape: Optional[Tuple[int, int, int]] = None
    split_ratio: Optional[float] = Field(None, gt=0, lt=1)
    background_threshold: Optional[int] = Field(None, ge=0, le=255)

    class Config:
        extra = 'forbid'


class ModelProvenance(BaseModel):
    """Data settings of the run that produced a model file"""
    seed: Optional[int] = None
    split_ratio: Optional[float] = Field(None, gt=0, lt=1)
    background_threshold: Optional[int] = Field(None, ge=0, le=255)
    already_processed: Optional[bool] = None

    class Config:
        extra = 'forbid'


class EvalReport(BaseModel):
    """Schema for evaluation metrics"""
    loss: float
    accuracy: float = Field(..., ge=0, le=1)
    macro_precision: float = Field(..., ge=0, le=1)
    macro_recall: float = Field(..., ge=0, le=1)
    confusion: List[List[int]] = Field(..., description="Rows are true classes, columns predictions")

    @validator('confusion')
    def validate_confusion(cls, v):
        """Validate that the confusion matrix is square"""
        if any(len(row) != len(v) for row in v):
            raise ValueError('Confusion matrix must be square')
        return v

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.confusion)

    def class_counts(self) -> List[int]:
        return [sum(row) for row in self.confusion]


class EpochRecord(BaseModel):
    """Schema for one row of the training log"""
    epoch: int = Field(..., ge=1)
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float

    def csv_row(self) -> List[str]:
        return [
            str(self.epoch),
            f"{self.train_loss:.6f}",
            f"{self.train_acc:.6f}",
            f"{self.test_loss:.6f}",
            f"{self.test_acc:.6f}",
        ]


CSV_HEADER = ['epoch', 'train_loss', 'train_acc', 'test_loss', 'test_acc']
