"""Frontend for a small Java-like language: parsing, call graphs, main-path
extraction, taint edges and summary emission."""

from .callgraph import CallEdge, CallGraph, build_call_graph, extract_main_paths
from .emit import EntrySpec, SinkSpec, SourceSinkConfig, emit_summary, generate_summary, load_config
from .parser import parse_methods, parse_program
from .syntax import MiniProgram
from .taint import compute_taint

__all__ = [
    "CallEdge", "CallGraph", "EntrySpec", "MiniProgram", "SinkSpec", "SourceSinkConfig",
    "build_call_graph", "compute_taint", "emit_summary", "extract_main_paths", "generate_summary",
    "load_config", "parse_methods", "parse_program",
]
