from .config import *
from .results import *
from .oracles import *
from .fixtures import *
from .studies import *
from .cli import *
