"""Merge-model image captioning from precomputed image features."""

__version__ = "0.1.0"

from .bleu import BleuConfig, BleuReport, bleu_score, preset
from .captioner import MergeModel, ModelConfig, TrainReport, build_model, greedy_decode, train
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .dataloader import Batch, TrainSample, expand_caption, stream_epoch
from .feature_store import FeatureStore, read_store, synth_features, write_store
from .text_prep import (
    CaptionSet,
    RawCaptionRecord,
    Vocabulary,
    build_caption_set,
    build_vocabulary,
    clean_caption,
    parse_token_file,
    read_descriptions_file,
    write_descriptions_file,
)

__all__ = [
    "Batch",
    "BleuConfig",
    "BleuReport",
    "CaptionSet",
    "Checkpoint",
    "FeatureStore",
    "MergeModel",
    "ModelConfig",
    "RawCaptionRecord",
    "TrainReport",
    "TrainSample",
    "Vocabulary",
    "bleu_score",
    "build_caption_set",
    "build_model",
    "build_vocabulary",
    "clean_caption",
    "expand_caption",
    "greedy_decode",
    "load_checkpoint",
    "parse_token_file",
    "preset",
    "read_descriptions_file",
    "read_store",
    "save_checkpoint",
    "stream_epoch",
    "synth_features",
    "train",
    "write_descriptions_file",
    "write_store",
]
