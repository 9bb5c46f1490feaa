"""slider-forge: adversarially trained concept sliders for a desk-scale
conditional diffusion model.

Train low-rank adapter "sliders" that push a named visual concept up or
down, supervised by a composed guidance target, a perceptual loss, and a
discriminator with dynamic loss weighting; use them through a CLI, an
HTTP inference service, and an interactive browser UI.
"""

__version__ = "0.1.0"
