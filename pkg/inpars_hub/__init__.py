"""InPars Hub — synthetic training data and retrieve-then-rerank evaluation."""

__version__ = "0.1.0"
