__version__ = "0.1.0"

from .midi import *
from .nn import *
from .model import *
from .evaluation import *
from .exceptions import *
from .config import *
