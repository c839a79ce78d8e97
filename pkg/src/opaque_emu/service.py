"""asyncio TCP emulation endpoint."""

from __future__ import annotations

import asyncio
import json
import logging
import time
from dataclasses import dataclass

from .matcher import select_prototype
from .model import EmulationModel
from .responder import generate_response

log = logging.getLogger("opaque_emu.service")


class FramingError(Exception):
    """Unrecoverable framing problem; the connection is closed."""


class OversizeMessage(FramingError):
    pass


@dataclass(frozen=True)
class Delimiter:
    delimiter: bytes = b"\n"

    def __post_init__(self):
        if not self.delimiter:
            raise ValueError("delimiter must be non-empty")


@dataclass(frozen=True)
class LengthPrefix:
    width: int = 4
    byteorder: str = "big"
    includes_header: bool = False

    def __post_init__(self):
        if self.width not in (1, 2, 4):
            raise ValueError("length prefix width must be 1, 2 or 4")
        if self.byteorder not in ("big", "little"):
            raise ValueError("byteorder must be 'big' or 'little'")

    def encode(self, payload: bytes) -> bytes:
        n = len(payload) + (self.width if self.includes_header else 0)
        return n.to_bytes(self.width, self.byteorder) + payload


@dataclass(frozen=True)
class IdleTimeout:
    milliseconds: float = 50.0

    def __post_init__(self):
        if not self.milliseconds > 0:
            raise ValueError("idle timeout must be > 0")


FramingPolicy = Delimiter | LengthPrefix | IdleTimeout


def parse_framing(text: str) -> FramingPolicy:
    """``delim:\\n`` | ``len:4:big[:incl]`` | ``idle:50``."""
    kind, _, rest = text.partition(":")
    if kind == "delim":
        return Delimiter(rest.encode().decode("unicode_escape").encode("latin-1") or b"\n")
    if kind == "len":
        parts = rest.split(":") if rest else []
        width = int(parts[0]) if parts else 4
        order = parts[1] if len(parts) > 1 else "big"
        incl = len(parts) > 2 and parts[2] == "incl"
        return LengthPrefix(width, order, incl)
    if kind == "idle":
        return IdleTimeout(float(rest or 50))
    raise ValueError(f"unknown framing {text!r}")


async def read_message(reader: asyncio.StreamReader, framing: FramingPolicy,
                       max_size: int = 65536) -> bytes | None:
    """One framed message, or ``None`` on a clean EOF between messages."""
    if isinstance(framing, Delimiter):
        try:
            data = await reader.readuntil(framing.delimiter)
        except asyncio.IncompleteReadError as exc:
            if not exc.partial:
                return None
            raise FramingError("EOF in the middle of a message") from exc
        except asyncio.LimitOverrunError as exc:
            raise OversizeMessage("message exceeds the stream buffer limit") from exc
        body = data[:-len(framing.delimiter)]
        if len(body) > max_size:
            raise OversizeMessage(f"message of {len(body)} bytes exceeds limit {max_size}")
        return body
    if isinstance(framing, LengthPrefix):
        try:
            header = await reader.readexactly(framing.width)
        except asyncio.IncompleteReadError as exc:
            if not exc.partial:
                return None
            raise FramingError("EOF inside a length prefix") from exc
        n = int.from_bytes(header, framing.byteorder)
        if framing.includes_header:
            if n < framing.width:
                raise FramingError(f"declared length {n} is shorter than its header")
            n -= framing.width
        if n > max_size:
            raise OversizeMessage(f"declared length {n} exceeds limit {max_size}")
        try:
            return await reader.readexactly(n)
        except asyncio.IncompleteReadError as exc:
            raise FramingError("EOF in the middle of a message") from exc
    if isinstance(framing, IdleTimeout):
        buf = bytearray()
        timeout = framing.milliseconds / 1000.0
        while True:
            try:
                chunk = await asyncio.wait_for(reader.read(65536), timeout)
            except asyncio.TimeoutError:
                if buf:
                    return bytes(buf)
                continue
            if not chunk:
                if buf:
                    return bytes(buf)
                return None
            buf += chunk
            if len(buf) > max_size:
                raise OversizeMessage(f"message exceeds limit {max_size}")
    raise TypeError(f"unsupported framing {framing!r}")


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 10389
    framing: FramingPolicy = Delimiter()
    model_path: str | None = None
    delay_ms: float = 0.0
    max_connections: int = 256
    max_message_size: int = 65536
    append_delimiter: bool = True

    def __post_init__(self):
        if self.max_message_size <= 0:
            raise ValueError("max message size must be > 0")
        if self.max_connections <= 0:
            raise ValueError("max connections must be > 0")
        if self.delay_ms < 0:
            raise ValueError("delay must be >= 0")


@dataclass(frozen=True)
class Reply:
    payload: bytes
    cluster_id: int
    d_rel: float
    generation_us: float


def respond(model: EmulationModel, request: bytes) -> Reply:
    t0 = time.perf_counter()
    result = select_prototype(model, request)
    cluster = model.cluster(result.cluster_id)
    payload = generate_response(cluster.centroid, cluster.fields, request, model.params.scoring)
    return Reply(payload, result.cluster_id, result.d_rel, (time.perf_counter() - t0) * 1e6)


def _frame(config: ServiceConfig, payload: bytes) -> bytes:
    f = config.framing
    if isinstance(f, LengthPrefix):
        return f.encode(payload)
    if isinstance(f, Delimiter) and config.append_delimiter and not payload.endswith(f.delimiter):
        return payload + f.delimiter
    return payload


class EmulationServer:
    """Handle to a running server; ``generation_us`` collects per-request generation times."""

    def __init__(self, config: ServiceConfig, model: EmulationModel):
        self.config = config
        self.model = model
        self.generation_us: list[float] = []
        self._slots = asyncio.Semaphore(config.max_connections)
        self._server: asyncio.base_events.Server | None = None
        self._handlers: set[asyncio.Task] = set()

    @property
    def port(self) -> int:
        return self._server.sockets[0].getsockname()[1]

    async def start(self) -> "EmulationServer":
        if self.model.clusters:  # load compiled kernels before the first client arrives
            respond(self.model, self.model.clusters[0].centroid.request)
        self._server = await asyncio.start_server(
            self._handle, self.config.host, self.config.port,
            limit=max(self.config.max_message_size + 1024, 65536))
        return self

    async def close(self, grace_s: float = 1.0) -> None:
        """Stop accepting, give in-flight handlers ``grace_s`` to finish, cancel idle ones."""
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        pending = set(self._handlers)
        if pending:
            _, pending = await asyncio.wait(pending, timeout=grace_s)
        for task in pending:
            task.cancel()
        if pending:
            await asyncio.gather(*pending, return_exceptions=True)

    async def serve_forever(self) -> None:
        async with self._server:
            await self._server.serve_forever()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        self._handlers.add(task)
        peer = writer.get_extra_info("peername")
        peer = f"{peer[0]}:{peer[1]}" if isinstance(peer, tuple) else str(peer)
        try:
            async with self._slots:
                await self._loop(reader, writer, peer)
        finally:
            self._handlers.discard(task)
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass

    async def _loop(self, reader, writer, peer: str) -> None:
        while True:
            try:
                request = await read_message(reader, self.config.framing, self.config.max_message_size)
            except FramingError as exc:
                log.warning(json.dumps({"event": "framing_error", "peer": peer, "error": str(exc)}))
                return
            except (ConnectionError, OSError):
                return
            if request is None:
                return
            try:
                reply = respond(self.model, request)
            except Exception as exc:  # noqa: BLE001 - isolate this connection
                log.error(json.dumps({"event": "generation_error", "peer": peer, "error": repr(exc)}))
                return
            self.generation_us.append(reply.generation_us)
            log.info(json.dumps({
                "ts": time.time(), "peer": peer, "request_bytes": len(request),
                "cluster": reply.cluster_id, "d_rel": round(reply.d_rel, 6),
                "generation_us": round(reply.generation_us, 1)}))
            if self.config.delay_ms:
                await asyncio.sleep(self.config.delay_ms / 1000.0)
            try:
                writer.write(_frame(self.config, reply.payload))
                await writer.drain()
            except (ConnectionError, OSError):
                return


async def serve(config: ServiceConfig, model: EmulationModel,
                stop: asyncio.Event | None = None) -> None:
    """Run until ``stop`` is set (or forever); in-flight handlers are drained."""
    server = await EmulationServer(config, model).start()
    log.info(json.dumps({"event": "listening", "host": config.host, "port": server.port,
                         "clusters": len(model.clusters)}))
    try:
        if stop is None:
            await server.serve_forever()
        else:
            await stop.wait()
    finally:
        await server.close()
