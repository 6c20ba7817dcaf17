"""Short-utterance spoof detection: cepstral features, channel simulation, attention network, training and evaluation."""

__version__ = "0.1.0"
