from .triple import *
from .solvers import *
from .sweep import *
