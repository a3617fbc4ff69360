"""Exceptions mapped onto the wire protocol's error envelope."""


class RequestError(ValueError):
    """Malformed or out-of-contract request; served as HTTP 400."""


class PromptInfeasibleError(RequestError):
    """No mask can satisfy the prompts; served as HTTP 422."""


class ModelLoadError(RuntimeError):
    """The configured model cannot be constructed; fails startup."""
