"""Sequential multi-agent probabilistic sentiment inference.

Agents pass a shared document around in turn, each adding an analysis, a
one-sentence rationale and a label distribution; an optional informal chat
round mid-way feeds free-form comments back into the circulation, and a judge
fuses the result.
"""
from .backend import CompletionRequest, CompletionResponse, HttpBackend, Message, ScriptedBackend
from .core import (
    FIVE_CLASS,
    THREE_CLASS,
    AgentStepRecord,
    Comment,
    Document,
    LabelSpace,
    ProbabilityVector,
    argmax_label,
    dist_variance,
    entropy,
    make_uniform,
    normalize,
)
from .datasets import DatasetSpec, Instance, default_spec, load_dataset, sample_instances
from .metrics import (
    EvalRecord,
    StepStats,
    brier,
    cross_dataset_average,
    log_loss,
    macro_f1,
    micro_f1,
    step_stats,
)
from .orchestrator import (
    PipelineConfig,
    Transcript,
    ibc_session,
    init_document,
    judge_finalize,
    kcs_step,
    run_instance,
    run_pipeline,
    run_single,
)
from .experiment import RunConfig, RunSummary, run_experiment

__version__ = "0.1.0"
