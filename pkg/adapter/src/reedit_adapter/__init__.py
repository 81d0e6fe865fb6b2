"""reedit-adapter: reference wire-protocol server for editing, captioning,
and embedding backends, plus protocol-conformance stubs."""

__version__ = "0.1.0"

from .bindings import ModelBinding, callable_editor, echo_editor, stub_captioner, stub_embedder
from .server import load_bindings_config, make_app, serve

__all__ = [
    "ModelBinding",
    "callable_editor",
    "echo_editor",
    "load_bindings_config",
    "make_app",
    "serve",
    "stub_captioner",
    "stub_embedder",
    "__version__",
]
