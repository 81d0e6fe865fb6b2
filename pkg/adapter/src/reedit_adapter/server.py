"""The wire-protocol server.

Routes (bodies UTF-8 JSON):
    POST /v1/edit     {"image": b64-PNG, "prompt": str, "seed": int} -> {"image": b64-PNG}
    POST /v1/caption  {"image": b64-PNG}                             -> {"caption": str}
    POST /v1/embed    {"image": b64-PNG, "space": str}               -> {"vector": [...]}
    GET  /v1/info                                                     -> {"name","kind","version"}

Errors: 400 malformed body, 404 no binding for the route's kind,
422 unsupported embedding space, 500 {"error": str} on model failure.
"""

from __future__ import annotations

import argparse
import base64
import binascii
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .bindings import MalformedImage, ModelBinding, STUBS


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _decode_image_field(body: dict) -> bytes:
    image = body.get("image")
    if not isinstance(image, str) or not image:
        raise MalformedImage("missing 'image' field")
    try:
        return base64.b64decode(image, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise MalformedImage(f"invalid base64: {exc}") from exc


def make_app(bindings: list[ModelBinding]) -> FastAPI:
    """One server instance over an ordered binding list; /v1/info reports
    the first binding, routes dispatch to the first binding of their kind."""
    if not bindings:
        raise ValueError("need at least one binding")
    app = FastAPI()
    by_kind = {}
    for binding in bindings:
        by_kind.setdefault(binding.kind, binding)

    async def _json_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise MalformedImage("body is not valid JSON")
        if not isinstance(body, dict):
            raise MalformedImage("body must be a JSON object")
        return body

    @app.get("/v1/info")
    async def info():
        return bindings[0].info()

    @app.post("/v1/edit")
    async def edit(request: Request):
        binding = by_kind.get("editor")
        if binding is None:
            return _error(404, "no editor binding")
        try:
            body = await _json_body(request)
            png = _decode_image_field(body)
            prompt = body.get("prompt")
            if not isinstance(prompt, str) or not prompt:
                return _error(400, "prompt: missing or empty")
            seed = body.get("seed", 0)
            if not isinstance(seed, int):
                return _error(400, "seed must be an integer")
            out = binding.fn(png, prompt, seed)
        except MalformedImage as exc:
            return _error(400, str(exc))
        except Exception as exc:
            return _error(500, f"{type(exc).__name__}: {exc}")
        return {"image": base64.b64encode(out).decode("ascii")}

    @app.post("/v1/caption")
    async def caption(request: Request):
        binding = by_kind.get("captioner")
        if binding is None:
            return _error(404, "no captioner binding")
        try:
            body = await _json_body(request)
            png = _decode_image_field(body)
            text = binding.fn(png)
        except MalformedImage as exc:
            return _error(400, str(exc))
        except Exception as exc:
            return _error(500, f"{type(exc).__name__}: {exc}")
        return {"caption": text}

    @app.post("/v1/embed")
    async def embed(request: Request):
        binding = by_kind.get("embedder")
        if binding is None:
            return _error(404, "no embedder binding")
        try:
            body = await _json_body(request)
            png = _decode_image_field(body)
            space = body.get("space")
            if space not in ("semantic", "perceptual"):
                return _error(422, f"unsupported space: {space!r}")
            vector = binding.fn(png, space)
        except MalformedImage as exc:
            return _error(400, str(exc))
        except Exception as exc:
            return _error(500, f"{type(exc).__name__}: {exc}")
        return {"vector": list(vector)}

    return app


def load_bindings_config(path) -> list[ModelBinding]:
    """Config file: one binding per line, ``<stub-name>`` or
    ``<kind> <name> = <stub-name>``; '#' comments."""
    bindings = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            head, _, stub = line.partition("=")
            stub = stub.strip()
            kind, name = head.split()
            factory = STUBS[stub]
            binding = factory(name)
            if binding.kind != kind:
                raise ValueError(f"binding {stub!r} is a {binding.kind}, not {kind}")
            bindings.append(binding)
        else:
            bindings.append(STUBS[line]())
    return bindings


def serve(bindings: list[ModelBinding], port: int, host: str = "127.0.0.1"):
    import uvicorn

    app = make_app(bindings)
    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    return uvicorn.Server(config)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="reedit-adapter")
    parser.add_argument("--config", default=None, help="bindings config file")
    parser.add_argument("--stub", action="append", choices=sorted(STUBS),
                        help="serve a built-in stub binding (repeatable)")
    parser.add_argument("--port", type=int, default=8701)
    parser.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)
    if args.config:
        bindings = load_bindings_config(args.config)
    elif args.stub:
        bindings = [STUBS[s]() for s in args.stub]
    else:
        bindings = [STUBS["echo-edit"](), STUBS["stub-caption"](), STUBS["stub-embed"]()]
    server = serve(bindings, args.port, args.host)
    server.run()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
