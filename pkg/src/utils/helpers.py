"""
Helper Functions for the LOVE library
"""

import json
import os
import platform
import time
from datetime import datetime
from typing import Any, Callable, Dict, Optional

import numpy as np

def format_timestamp(timestamp: Optional[datetime] = None) -> str:
    """
    Format timestamp for display

    Args:
        timestamp: Timestamp to format

    Returns:
        Formatted timestamp string
    """
    if timestamp is None:
        timestamp = datetime.now()

    return timestamp.strftime("%Y-%m-%d %H:%M:%S")

def median_wall_time(func: Callable[[], Any], repeats: int = 20) -> float:
    """
    Median wall time of ``func`` in seconds

    One untimed warm-up call is made first, then ``repeats`` timed calls on the
    monotonic performance counter.

    Args:
        func: Zero-argument callable to time
        repeats: Number of timed repetitions (at least 1)

    Returns:
        Median duration in seconds
    """
    func()
    durations = []
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        func()
        durations.append(time.perf_counter() - start)
    return float(np.median(durations))

def environment_metadata() -> Dict[str, str]:
    """Versions and host details echoed into every report"""
    import pandas
    import scipy

    return {
        'timestamp': format_timestamp(),
        'platform': platform.platform(),
        'processor': platform.processor(),
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pandas.__version__,
        'cpu_count': str(os.cpu_count()),
    }

class NumpyJSONEncoder(json.JSONEncoder):
    """JSON encoder that understands numpy scalars and arrays"""

    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return super().default(o)

def write_json(path: str, payload: Dict[str, Any]) -> str:
    """
    Write a JSON document, creating parent directories

    Args:
        path: Output path
        payload: JSON-serializable mapping (numpy values allowed)

    Returns:
        The path written
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True, cls=NumpyJSONEncoder)
    return path
