"""devia: simulation and deviations analysis for weakly interacting particle systems.

Subpackages and modules:

- ``mf_model``: jump-model definitions (simplex states, rate matrices, cell
  geometry, drift and its derivative, thinning cost function).
- ``jump_sim``: exact event-driven simulation, tilted simulation, scaled
  fluctuation paths.
- ``jump_analysis``: limit ODE, skeleton map, jump rate functions, control
  conversions.
- ``diff_sim``: interacting / controlled / reference diffusion ensembles,
  coupling and occupation measures.
- ``diff_analysis``: nonlinear Fokker-Planck and linearized solvers, diffusion
  rate function.
- ``schwartz``: rapidly decaying test functions, seminorms, generator action.
- ``harness``: experiment runners, bound-check suite, reports and the CLI.
"""

__version__ = "0.1.0"
