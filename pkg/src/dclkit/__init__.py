"""Desk-scale toolkit for few-shot adaptation of a pretrained image generator.

Adapts a small pretrained GAN to a handful of target images with a dual
contrastive objective, plus the TGAN / FreezeD / EWC / CDC baselines, and
ships the quality/diversity analysis metrics used to compare them.
"""

__version__ = "0.1.0"
