import os
import sys

# Run against an in-tree build when DSTF_PYTHON_DIR points at build/python.
_build = os.environ.get("DSTF_PYTHON_DIR")
if _build:
    sys.path.insert(0, _build)
