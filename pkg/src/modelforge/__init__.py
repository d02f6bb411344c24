"""modelforge: a desk-scale model lifecycle platform.

Templates package a training pipeline, serving spec, and parameter schema
into an immutable archive; the platform instantiates them per configuration,
trains on local data, gates deployment behind approval, serves with
scale-to-zero, monitors for drift, and retrains on schedule or on events.
"""

__version__ = "0.1.0"
