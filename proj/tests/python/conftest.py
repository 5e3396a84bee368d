import os
import sys

# ctest points this at <build>/python; an installed wheel works without it.
_build = os.environ.get("FLOWCAST_PYTHON_PATH")
if _build:
    sys.path.insert(0, _build)
