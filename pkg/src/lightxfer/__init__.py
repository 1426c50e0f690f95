"""Lighting transfer for inserting neural-field objects into physically rendered scenes.

Modules:

* ``color``, ``metrics``: colour conversion and image quality measures.
* ``mesh``, ``render``: triangle meshes and a ray tracer that emits layered renders.
* ``autodiff``, ``network``, ``losses``: a small reverse-mode autodiff engine, the
  transfer network and its training objectives.
* ``pipeline``: dataset synthesis, training, evaluation, ablations and compositing.
* ``cli``: the ``lightxfer`` command.
"""

__version__ = "0.1.0"
