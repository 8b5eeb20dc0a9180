"""Suffix/prefix LSTM sentence encoders trained on entailment pairs."""
from .encoder import EncoderConfig, EncoderParams, LstmParams, Variant, encode, encoding_dim
from .head import HeadConfig, HeadParams, NliLabel
from .train import TrainConfig

__all__ = [
    "EncoderConfig", "EncoderParams", "LstmParams", "Variant", "encode", "encoding_dim",
    "HeadConfig", "HeadParams", "NliLabel", "TrainConfig",
]
