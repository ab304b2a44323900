from .core import __version__

from .core import *
from .specfun import *
from .spectrum import *
from .kernels import *
from .propagators import *
from .analysis import *
