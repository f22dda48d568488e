from .step import *
from .solver import *
