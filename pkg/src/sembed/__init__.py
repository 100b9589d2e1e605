"""Spoken sentence embeddings at desk scale.

A dilated causal temporal-convolutional encoder trained under a joint
acoustic-reconstruction + transcription loss, segment-embedding fusion
baselines, a deterministic synthetic speech corpus, and a downstream
ASR / emotion-recognition evaluation harness.
"""

__version__ = "0.1.0"
