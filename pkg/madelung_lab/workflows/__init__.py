"""madelung_lab workflows."""

from .audit import *
from .hydro import *
from .klein_gordon import *
from .madelung import *
from .schrodinger import *
from .trajectories import *
from .uncertainty import *
