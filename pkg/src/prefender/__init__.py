"""Cycle-level cache/prefetcher simulator with a prefetch-based side-channel defense."""

from .access_tracker import AccessBuffer, AccessTracker, AtConfig
from .attacks import (
    AttackKind,
    AttackSpec,
    Challenge,
    InferenceResult,
    Verdict,
    gen_attack,
    infer_secret,
    run_scenario,
    run_trial,
)
from .isa import CoreState, MicroInstruction, Opcode, Program, StepResult, parse_program
from .memory import CacheConfig, HitLevel, MemoryHierarchy, PrefetchOutcome, PrefetchSource
from .pipeline import DefenseConfig, Machine, Pipeline
from .record_protector import RecordProtector, RpConfig, ScaleBufferEntry
from .report import ScenarioReport, emit_report
from .scale_tracker import RegTrack, ScaleTracker, StCandidate, candidates_for_load

__version__ = "0.1.0"
