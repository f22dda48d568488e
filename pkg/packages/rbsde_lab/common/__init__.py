from .errors import *
from .limits import *
from .settings import *
from .setup import *
