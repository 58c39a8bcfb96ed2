from .builtins import NAMES, REFERENCE_OPTIMUM, builtin, export, make_env, truth_machine
from .env import HiddenEnvironment, reveal
from .grid import GridFormatError, GridSpec, compile_grid, load_grid

__all__ = [
    "NAMES", "REFERENCE_OPTIMUM", "builtin", "export", "make_env", "truth_machine",
    "HiddenEnvironment", "reveal", "GridFormatError", "GridSpec", "compile_grid", "load_grid",
]
