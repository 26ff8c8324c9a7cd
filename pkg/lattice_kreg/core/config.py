import os

import psutil
from dotenv import load_dotenv

load_dotenv()

APP_VERSION = os.getenv("APP_VERSION", "0.4.0")

LOG_LEVEL_FROM_ENV = os.getenv("LOG_LEVEL", "INFO").upper()

# 格点规模上限：n^d 超过该值直接拒绝，避免分配失败
MAX_LATTICE_POINTS = int(os.getenv("MAX_LATTICE_POINTS", f"{2 ** 31}"))

# ===== Kernel / quadrature =====
QUADRATURE_RTOL = float(os.getenv("QUADRATURE_RTOL", "1e-8"))
# 支撑集边界判定的容差，使格点卷积与逐点求值在 |u| = 1 处一致
SUPPORT_TOLERANCE = float(os.getenv("SUPPORT_TOLERANCE", "1e-12"))
A1_MASS_TOLERANCE = float(os.getenv("A1_MASS_TOLERANCE", "1e-6"))

# ===== Field simulation =====
DEFAULT_SPECTRAL_COMPONENTS = int(os.getenv("DEFAULT_SPECTRAL_COMPONENTS", "4096"))
FIELD_BINARY_MAGIC = b"LKRF"
CSV_MAX_POINTS = int(os.getenv("CSV_MAX_POINTS", "4096"))

# ===== Regression / inference =====
# h_n = c * n^(-gamma)；d=2 时 n*h^(d+1) = n^(1/4) -> inf
DEFAULT_BANDWIDTH_C = float(os.getenv("DEFAULT_BANDWIDTH_C", "1.0"))
DEFAULT_BANDWIDTH_GAMMA = float(os.getenv("DEFAULT_BANDWIDTH_GAMMA", "0.25"))
DEFAULT_PVALUE_THRESHOLD = float(os.getenv("DEFAULT_PVALUE_THRESHOLD", "0.01"))
DEFAULT_REPLICATES = int(os.getenv("DEFAULT_REPLICATES", "50"))
DEFAULT_KS_ALPHA = float(os.getenv("DEFAULT_KS_ALPHA", "0.01"))

# ===== Condition checkers =====
CONDITION_MAX_RADIUS = int(os.getenv("CONDITION_MAX_RADIUS", "1000"))
CONDITION_CONVERGE_RATIO = float(os.getenv("CONDITION_CONVERGE_RATIO", "0.95"))

# ===== Runtime =====
DEFAULT_OUTPUT_DIR = os.getenv("DEFAULT_OUTPUT_DIR", "./runs")
DEFAULT_WORKERS = int(os.getenv("DEFAULT_WORKERS", "0")) or (psutil.cpu_count(logical=True) or 1)
