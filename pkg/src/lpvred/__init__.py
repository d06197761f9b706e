"""Affine LPV embedding and scheduling dimension reduction toolkit."""

__version__ = "0.1.0"

_LAZY = {
    "AnalyticBenchmarkModel": "models",
    "FactorizedModel": "models",
    "ParafoilModel": "models",
    "StateSpacePoint": "models",
    "get_model": "models",
    "integrate_rk4": "simulate",
    "generate_dataset": "simulate",
    "build_variation_dataset": "lpv",
    "full_order_lpv": "lpv",
    "fit_pca": "pca",
    "fit_normalizer": "pca",
    "train": "nnet",
    "TrainConfig": "nnet",
}

__all__ = ["__version__", *sorted(_LAZY)]


def __getattr__(name: str):
    # keep `import lpvred` light so the CLI can pin threading environment
    # variables before numpy is loaded
    if name in _LAZY:
        import importlib

        module = importlib.import_module(f".{_LAZY[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
