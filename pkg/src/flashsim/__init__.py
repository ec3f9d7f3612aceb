"""High-frequency agent-based limit order book simulator with stylised-facts
calibration and flash-crash experiment harnesses."""
from .book import OrderBook, Order, Trade, BookSnapshot
from .calibration import (
    CalibrationSpace, SurrogateCalibrator, grid_refine, surrogate_search, validate,
)
from .config import load_config, load_document, preset_config, with_params
from .facts import StylisedFactsDistance, bootstrap_weights, hill_estimator, moment_vector
from .kernel import SimConfig, SimRecord, run
from .scenarios import (
    crash_metrics, detect_mini_crashes, prominences, run_flash_crash_scenario,
    run_mini_crash_scenario, sweep,
)
from .signal import KalmanSmoother, kalman_smooth

__version__ = "0.1.0"
