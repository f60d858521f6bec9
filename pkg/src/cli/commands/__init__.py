from . import evaluate, fit, mesh, sample, shfit

__all__ = ["evaluate", "fit", "mesh", "sample", "shfit"]
