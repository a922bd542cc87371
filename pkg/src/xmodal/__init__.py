"""Desk-scale cross-modal image/text retrieval with one shared embedding network.

Captions are rendered into RGB images via word-embedding vectors, a single
convolutional network embeds both modalities into one space under joint
softmax + center-loss supervision, and retrieval is Euclidean nearest
neighbor scored by bidirectional Recall@K.
"""

__version__ = "0.1.0"
