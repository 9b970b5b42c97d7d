"""synthdet: randomized synthetic data for object detection.

Procedural scene sampling, CPU ray-cast rendering with ground-truth
channels, annotation derivation, training-time augmentation, dataset
serialization, and COCO-style detection evaluation with robustness
harnesses.  See README.md for a tour; runnable walkthroughs live in
``demos/``.
"""

__version__ = "0.1.0"
