"""Software twin of a hardware MLP event-camera denoiser.

Bit-exact 4-bit inference over timestamp-polarity-image features,
quantization-aware training, synthetic labeled data, ROC/AUC evaluation,
a BAF baseline and a latency/throughput/energy model of the pipeline.
"""

__version__ = "0.1.0"
