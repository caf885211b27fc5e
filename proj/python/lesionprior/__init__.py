"""Brain-lesion segmentation with a location prior and a 3D U-Net.

Volumes are numpy arrays indexed [x, y, z]; label maps use BraTS codes
(0 background, 1 NCR/NET, 2 ED, 4 ET).
"""

from ._lesionprior import *  # noqa: F401,F403
from ._lesionprior import LesionPriorError, LrMode  # noqa: F401
