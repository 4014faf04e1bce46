"""JIT shim: use numba when available, fall back to plain Python.

Every hot loop in the package is written in numba-compatible style and
decorated with :func:`maybe_jit`. Without numba the same code runs
unmodified (much slower, identical results up to float summation order,
which we keep sequential in both modes).
"""

try:
    from numba import njit as _njit

    HAVE_NUMBA = True

    def maybe_jit(func=None, **kwargs):
        kwargs.setdefault("cache", True)
        if func is None:
            return _njit(**kwargs)
        return _njit(**kwargs)(func)

except ImportError:  # pragma: no cover - exercised only on numba-less installs
    HAVE_NUMBA = False

    def maybe_jit(func=None, **kwargs):
        if func is None:
            return lambda f: f
        return func
