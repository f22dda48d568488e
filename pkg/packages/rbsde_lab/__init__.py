import logging
from . import common
from . import lattice
from . import problem
from . import bsde
from . import reflect
from . import picard
from . import analysis

# Import last since it depends on other modules
from . import harness
