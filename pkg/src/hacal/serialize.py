"""JSON round-tripping for the package's dataclasses.

Arrays are stored as ``{"shape": [...], "data": [...]}`` in column-major
order. Complex numbers are ``[re, im]`` pairs, both inside arrays and as
scalars. Dataclass fields opt in to a codec through ``field(metadata=...)``.
"""

import dataclasses
import json

import numpy as np

CODEC = "codec"


def complex_to_json(z):
    z = complex(z)
    return [z.real, z.imag]


def complex_from_json(pair):
    re, im = pair
    return complex(float(re), float(im))


def array_to_json(a):
    a = np.asarray(a)
    flat = a.reshape(-1, order="F")
    if np.iscomplexobj(flat):
        data = [[float(z.real), float(z.imag)] for z in flat]
    else:
        data = [float(x) for x in flat]
    return {"shape": list(a.shape), "data": data}


def array_from_json(obj):
    shape = tuple(obj["shape"])
    data = obj["data"]
    if data and isinstance(data[0], list):
        flat = np.array([complex(re, im) for re, im in data], dtype=complex)
    else:
        flat = np.array(data, dtype=float)
    return flat.reshape(shape, order="F")


def carray(**kwargs):
    """Dataclass field holding a numpy array."""
    return dataclasses.field(metadata={CODEC: "array"}, **kwargs)


def cscalar(**kwargs):
    """Dataclass field holding a complex scalar."""
    return dataclasses.field(metadata={CODEC: "complex"}, **kwargs)


def nested(cls, **kwargs):
    """Dataclass field holding another serializable dataclass."""
    return dataclasses.field(metadata={CODEC: cls}, **kwargs)


class JsonMixin:
    """Adds ``to_dict``/``from_dict``/``to_json``/``from_json`` to a dataclass."""

    def to_dict(self):
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            codec = f.metadata.get(CODEC)
            if value is None:
                out[f.name] = None
            elif codec == "array":
                out[f.name] = array_to_json(value)
            elif codec == "complex":
                out[f.name] = complex_to_json(value)
            elif isinstance(codec, type):
                out[f.name] = value.to_dict()
            elif isinstance(value, tuple):
                out[f.name] = list(value)
            elif isinstance(value, (np.floating, np.integer, np.bool_)):
                out[f.name] = value.item()
            else:
                out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data):
        kwargs = {}
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown fields for {cls.__name__}: {sorted(unknown)}")
        for f in dataclasses.fields(cls):
            if f.name not in data:
                continue
            value = data[f.name]
            codec = f.metadata.get(CODEC)
            if value is None:
                kwargs[f.name] = None
            elif codec == "array":
                kwargs[f.name] = array_from_json(value)
            elif codec == "complex":
                kwargs[f.name] = complex_from_json(value)
            elif isinstance(codec, type):
                kwargs[f.name] = codec.from_dict(value)
            elif isinstance(value, list):
                kwargs[f.name] = tuple(value)
            else:
                kwargs[f.name] = value
        return cls(**kwargs)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))
