import os
import sys

# the compiled module lives in the CMake build tree during development;
# installed packages import it as hawkesnet._hawkesnet instead
module_dir = os.environ.get("HAWKESNET_MODULE_DIR")
if module_dir and module_dir not in sys.path:
    sys.path.insert(0, module_dir)
