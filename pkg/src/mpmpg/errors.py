"""Exception types raised across the package.

Every fault carries enough context (step, iteration, offending exponent)
for the CLI to print a single machine-readable error line.
"""


class MpmpgError(Exception):
    """Base class; ``code`` is the short tag printed by the CLI."""

    code = "error"

    def fields(self):
        return {}


class RolloutError(MpmpgError, FloatingPointError):
    code = "rollout"

    def __init__(self, step, what="non-finite value"):
        super().__init__(f"{what} at step {step}")
        self.step = step

    def fields(self):
        return {"step": self.step}


class EnumerationBudgetExceeded(MpmpgError, ValueError):
    code = "enumeration_budget"

    def __init__(self, count, budget):
        super().__init__(f"{count} trajectories to enumerate exceeds budget {budget}")
        self.count = count
        self.budget = budget

    def fields(self):
        return {"count": self.count, "budget": self.budget}


class WeightOverflow(MpmpgError, FloatingPointError):
    """Importance weight does not fit in a double."""

    code = "iw_overflow"

    def __init__(self, max_logratio):
        super().__init__(f"importance weight overflow (max log-ratio {max_logratio:.6g})")
        self.max_logratio = float(max_logratio)

    def fields(self):
        return {"max_logratio": self.max_logratio}


class DivergenceOverflow(MpmpgError, FloatingPointError):
    code = "divergence_overflow"

    def __init__(self, exponent, cap):
        super().__init__(f"divergence exponent {exponent:.6g} exceeds cap {cap}")
        self.exponent = float(exponent)
        self.cap = cap

    def fields(self):
        return {"exponent": self.exponent, "cap": self.cap}


class ConfigError(MpmpgError, ValueError):
    code = "config"

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip())
        self.line = line
        self.path = path

    def fields(self):
        return {"line": self.line, "path": None if self.path is None else str(self.path)}


class IterationFault(MpmpgError, RuntimeError):
    """Wraps a fault raised inside a learning loop with the iteration index."""

    code = "iteration"

    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause

    def fields(self):
        out = {"iteration": self.iteration, "cause": type(self.cause).__name__}
        if isinstance(self.cause, MpmpgError):
            out.update(self.cause.fields())
        return out


class TooManyDiscards(MpmpgError, FloatingPointError):
    """Too many Monte-Carlo replications produced a non-finite value."""

    code = "discards"

    def __init__(self, discarded, total, limit):
        super().__init__(f"{discarded} of {total} replications non-finite (limit {limit:.0%})")
        self.discarded = discarded
        self.total = total

    def fields(self):
        return {"discarded": self.discarded, "total": self.total}
