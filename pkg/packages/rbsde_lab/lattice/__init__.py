from .grid import *
from .process import *
from .paths import *
from .augment import *
