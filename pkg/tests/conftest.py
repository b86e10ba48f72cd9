import os
import tempfile

# keep test-session logs out of the project tree; set before src.config is imported
os.environ.setdefault("SOCDIFFUSE_LOG_DIR", os.path.join(tempfile.gettempdir(), "socdiffuse-test-logs"))
