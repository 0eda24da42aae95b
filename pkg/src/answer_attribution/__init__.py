"""Post-hoc sentence-level answer attribution over long source documents."""

__version__ = "0.1.0"

from .attributor import (
    AttributionList,
    LexicalProxyScorer,
    NLIServiceScorer,
    Pipeline,
    SelectionConfig,
    UnitAttribution,
    attribute_answer,
    lexical_entailment_proxy,
    merge_unit_attributions,
    optimal_select,
    ranked_select,
)
from .core import (
    AnswerRecord,
    AnswerSentence,
    SourceDocument,
    SourceSentence,
    is_extractive,
    normalize,
    segment_sentences,
)
from .datasets import CanonicalRecord, compute_stats, read_canonical, write_canonical
from .decomposer import IdentityDecomposer, InformationUnit, LLMDecomposer, decompose
from .evaluation import MetricsReport, emit_report, evaluate, score_sentence
from .retrieval import Bm25Params, RankedList, bm25_rank, dense_rank, pairwise_rank, prune_sources, tokenize
