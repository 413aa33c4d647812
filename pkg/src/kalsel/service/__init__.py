"""HTTP service exposing the selection toolkit.

The :func:`create_app` factory builds a FastAPI application whose endpoints
wrap the core package one-to-one; request and response payloads are the
pydantic models from :mod:`kalsel.service.schemas`.
"""

from kalsel.service.app import create_app

__all__ = ["create_app"]
