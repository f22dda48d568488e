from .generator import *
from .obstacle import *
from .problem import *
from .shift import *
from .assumptions import *
from .catalog import *
