from .norms import *
from .estimates import *
from .compare import *
from .tanaka import *
