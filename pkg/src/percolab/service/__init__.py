"""HTTP layer: the FastAPI app factory and its request/response models."""

from .app import app, create_app

__all__ = ["app", "create_app"]
