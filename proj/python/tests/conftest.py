import os
import sys

# ctest points this at the build tree so the freshly built module is tested
# even when an editable install is present.
_build = os.environ.get("KINLIM_PYTHON_DIR")
if _build:
    sys.meta_path[:] = [f for f in sys.meta_path if "ScikitBuildRedirectingFinder" not in type(f).__name__]
    sys.path.insert(0, _build)
