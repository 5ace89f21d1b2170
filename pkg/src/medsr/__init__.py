"""medsr: two-stage sub-pixel convolutional super-resolution for 3D CT/MRI volumes."""

__version__ = "0.1.0"
