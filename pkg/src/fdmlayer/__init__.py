"""Field dislocation mechanics of a slip layer in a periodic elastic cell.

Modules: ``grid`` (periodic grids and spectral derivatives), ``static``
(spectral elastic solvers), ``hj`` (central-upwind transport), ``layer``
(coupled layer model), ``config``/``scenarios``/``cli`` (runs and files).
"""
__version__ = "0.1.0"
