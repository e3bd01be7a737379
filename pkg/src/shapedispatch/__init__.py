"""Two-stage defense against stealthy false data injection on DC grids.

Stage 1 (:mod:`shapedispatch.shaping_defense`) places load/line meters to
shrink the attack-induced region; stage 2 (:mod:`shapedispatch.dispatch_defense`)
dispatches generation inside the resulting preventive security region.
"""

__version__ = "0.1.0"
