"""Input validation helpers for the numerical estimators."""

import numpy as np


def check_vectors(X, name: str = "X", min_rows: int = 1) -> np.ndarray:
    """Coerce to a 2-D float64 array of finite row vectors."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got ndim={X.ndim}")
    if X.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} rows, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_square_symmetric(W, name: str = "W", tol: float = 1e-12) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"{name} must be square, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError(f"{name} contains non-finite values")
    if W.shape[0] and np.max(np.abs(W - W.T)) > tol:
        raise ValueError(f"{name} must be symmetric within {tol}")
    return W


def check_affinity(W, name: str = "W", allow_negative: bool = False) -> np.ndarray:
    W = check_square_symmetric(W, name=name)
    if not allow_negative and W.size and np.min(W) < 0:
        raise ValueError(f"{name} must be nonnegative; use the signed variant for "
                         "matrices with negative edges")
    return W


def check_n_clusters(k: int, n_points: int) -> int:
    k = int(k)
    if k < 1:
        raise ValueError(f"number of clusters must be >= 1, got {k}")
    if k > n_points:
        raise ValueError(f"number of clusters {k} exceeds number of points {n_points}")
    return k
