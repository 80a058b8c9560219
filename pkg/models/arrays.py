from typing import Annotated
import numpy as np
from pydantic import BeforeValidator, PlainSerializer


def _frozen(dtype):
    def convert(value) -> np.ndarray:
        arr = np.array(value, dtype=dtype)
        arr.flags.writeable = False
        return arr
    return convert


FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_frozen(float)),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]

IntArray = Annotated[
    np.ndarray,
    BeforeValidator(_frozen(np.int64)),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]
