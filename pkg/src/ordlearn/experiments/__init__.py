from .gallery import SCENARIOS, GalleryReport, Options, lookup, registry, run_gallery
from .montecarlo import MCRow, monte_carlo, simulate_many, wilson

__all__ = ["SCENARIOS", "GalleryReport", "Options", "lookup", "registry", "run_gallery", "MCRow", "monte_carlo",
           "simulate_many", "wilson"]
