"""Image forensics toolkit for 32x32 images.

Classifies images as real or AI-generated, quantifies thirteen perturbation
families, localizes suspicious regions through autoencoder reconstruction
error, assigns artifacts to a fixed eight-group taxonomy, and emits
human-readable explanation reports either offline or through a configurable
vision-language endpoint.
"""

__version__ = "0.1.0"
