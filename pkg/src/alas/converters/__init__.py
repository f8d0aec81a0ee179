"""Translation between the workflow IR and ASL / Argo documents."""

from .argo import emit_argo, ingest_argo
from .asl import emit_asl, ingest_asl
from .common import ConversionReport, UnsupportedConstruct, UnsupportedFeature
from .generate import random_ir
from .roundtrip import roundtrip_check

__all__ = [
    "ConversionReport", "UnsupportedConstruct", "UnsupportedFeature", "emit_argo", "emit_asl", "ingest_argo",
    "ingest_asl", "random_ir", "roundtrip_check",
]
