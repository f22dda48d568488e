from .schedule import *
from .frozen import *
from .iteration import *
