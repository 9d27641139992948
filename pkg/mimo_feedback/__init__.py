"""Limited-feedback multiuser MIMO simulator and bounds"""

from .experiments import __version__
