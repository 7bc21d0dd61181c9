"""Deepfake-video detection from dense optical flow.

Clips become sequences of HSV-colorized Horn-Schunck flow images, and a
hand-written CNN+LSTM classifies the sequence. Pure numpy float64, fully
deterministic for fixed seeds. See the submodules: media_io, face_roi,
optical_flow, tensor_nn, model, metrics, synth, experiment, cli.
"""

__version__ = "0.1.0"
