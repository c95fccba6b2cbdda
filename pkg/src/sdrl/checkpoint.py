"""Plain-text checkpoint container.

Layout::

    SDRL-CKPT v1
    [meta]
    key = value
    [config]
    key = value
    [scalars]
    key = value
    [rng]
    name = PCG64 <state> <inc> <has_uint32> <uinteger>
    [array <name> <dim>x<dim>...]
    <space-separated floats>
    [end]

Floats use Python's shortest round-trip ``repr`` so a load reproduces every
bit, and save -> load -> save is byte-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import nn
from .errors import CheckpointError

MAGIC = "SDRL-CKPT"
VERSION = "v1"
HEADER = f"{MAGIC} {VERSION}"


@dataclass
class Checkpoint:
    meta: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    rng: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)

    @property
    def env(self) -> str:
        return self.meta.get("env", "")

    @property
    def episode(self) -> int:
        return int(self.meta.get("episode", 0))

    def network(self, name: str) -> nn.NetworkParams:
        from .env import env_spec

        sizes = [int(s) for s in self.meta[f"net.{name}.layers"].split(",")]
        output = self.meta[f"net.{name}.output"]
        low = high = None
        if output == "tanh_scaled":
            spec = env_spec(self.env)
            low, high = spec.act_low, spec.act_high
        data = np.asarray(self.arrays[f"net.{name}"], dtype=np.float64).ravel().copy()
        return nn.NetworkParams(sizes, data, output, low, high)

    @property
    def networks(self) -> dict:
        names = [k[len("net."):-len(".layers")] for k in self.meta
                 if k.startswith("net.") and k.endswith(".layers")]
        return {n: self.network(n) for n in names}

    def put_network(self, name: str, params: nn.NetworkParams) -> None:
        self.meta[f"net.{name}.layers"] = ",".join(map(str, params.layer_sizes))
        self.meta[f"net.{name}.output"] = params.output_activation
        self.arrays[f"net.{name}"] = params.data.copy()


def _fmt(x: float) -> str:
    return repr(float(x))


def rng_state_text(gen: np.random.Generator) -> str:
    st = gen.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise CheckpointError(f"unsupported bit generator {st['bit_generator']}")
    return (f"PCG64 {st['state']['state']} {st['state']['inc']} "
            f"{st['has_uint32']} {st['uinteger']}")


def rng_from_text(text: str) -> np.random.Generator:
    parts = text.split()
    if len(parts) != 5 or parts[0] != "PCG64":
        raise CheckpointError(f"bad rng state {text!r}")
    bg = np.random.PCG64()
    bg.state = {"bit_generator": "PCG64",
                "state": {"state": int(parts[1]), "inc": int(parts[2])},
                "has_uint32": int(parts[3]), "uinteger": int(parts[4])}
    return np.random.Generator(bg)


def dumps(ckpt: Checkpoint) -> str:
    lines = [HEADER]
    for section in ("meta", "config", "scalars", "rng"):
        lines.append(f"[{section}]")
        for key, value in getattr(ckpt, section).items():
            lines.append(f"{key} = {value}")
    for name, arr in ckpt.arrays.items():
        a = np.asarray(arr, dtype=np.float64)
        dims = "x".join(str(d) for d in a.shape) if a.ndim else "scalar"
        lines.append(f"[array {name} {dims}]")
        lines.append(" ".join(_fmt(v) for v in a.ravel().tolist()))
    lines.append("[end]")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Checkpoint:
    lines = text.split("\n")
    if not lines or not lines[0].startswith(MAGIC):
        raise CheckpointError("not an SDRL checkpoint (missing header)")
    if lines[0].strip() != HEADER:
        raise CheckpointError(f"unsupported checkpoint version {lines[0].strip()!r}; "
                              f"expected {HEADER!r}")
    if lines[-2:] != ["[end]", ""]:
        raise CheckpointError("checkpoint is truncated (no end marker)")
    lines = lines[:-2]
    ckpt = Checkpoint()
    section: Optional[str] = None
    i = 1
    while i < len(lines):
        line = lines[i]
        i += 1
        if line == "":
            continue
        if line.startswith("[array "):
            head = line[len("[array "):-1].split()
            if len(head) != 2 or not line.endswith("]"):
                raise CheckpointError(f"bad array header {line!r}")
            name, dims = head
            shape = () if dims == "scalar" else tuple(int(d) for d in dims.split("x"))
            if i >= len(lines):
                raise CheckpointError(f"checkpoint is truncated in array {name}")
            body = lines[i]
            i += 1
            values = [float(v) for v in body.split()] if body.strip() else []
            expected = int(np.prod(shape)) if shape else 1
            if len(values) != expected:
                raise CheckpointError(f"array {name}: expected {expected} values, "
                                      f"found {len(values)}")
            ckpt.arrays[name] = np.array(values, dtype=np.float64).reshape(shape)
            section = None
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            if section not in ("meta", "config", "scalars", "rng"):
                raise CheckpointError(f"unknown section {section!r}")
            continue
        if section is None:
            raise CheckpointError(f"unexpected line {line!r}")
        key, sep, value = line.partition(" = ")
        if not sep:
            raise CheckpointError(f"bad entry {line!r} in [{section}]")
        getattr(ckpt, section)[key] = value
    return ckpt


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(ckpt))
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    return loads(text)
