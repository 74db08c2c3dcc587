"""Curvature-operator algebra and metric deformation pipelines.

Subpackages mirror the workflow: ``curvature_algebra`` (operators on
bivectors), ``conditions`` (membership margins and cone certificates),
``warped_metrics`` (warping profiles), ``bending`` (plane curves for the
bent tube), ``disc_deformations`` (rotationally symmetric disc metrics) and
``cli`` (command line entry point).
"""

__version__ = "0.1.0"
