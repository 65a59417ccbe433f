"""wastetwin: a simulated robotic waste-sorting cell feeding an anaerobic
bio-digestor, PID-regulated and adaptively optimized by a regression
surrogate with particle swarm search."""

__version__ = "0.1.0"
