"""Structure recognized HTML tables and answer questions over them."""

from .ingest import (
    BBox,
    Cell,
    Grid,
    MalformedHtml,
    RawTable,
    detect_blank,
    grid_from_json,
    grid_to_html,
    grid_to_json,
    normalize_grid,
    parse_table_html,
)
from .metrics import EvalReport, ScoreBreakdown, anls_score, evaluate, levenshtein, nls, numeric_score
from .numeric import normalize_numeric, render_number
from .pipeline import PipelineConfig, StatsReport, compute_stats, run_pipeline
from .qa import (
    ExternalAnswerer,
    LinearizedTable,
    answer_external,
    answer_lookup,
    answer_zero,
    linearize,
)
from .records import AnswerRecord, AnswerType, QuestionRecord
from .structure import (
    HeaderPrediction,
    HierarchyOptions,
    StructuredTable,
    build_structured,
    flatten_hierarchy_v1,
    flatten_hierarchy_v2,
    is_empty_cell,
    predict_headers,
)

__version__ = "0.1.0"
