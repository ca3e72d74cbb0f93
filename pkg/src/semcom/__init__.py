"""Learned joint source-channel image transmission over an AWGN channel,
with multi-level semantic side features and capacity-bounded digital baselines.
"""

__version__ = "0.1.0"
