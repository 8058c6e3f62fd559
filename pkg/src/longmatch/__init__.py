"""Long-form text matching with hierarchical PageRank noise filtering.

Two filters work together: an unsupervised sentence-level filter ranks the
pooled sentences of a document pair on a cross-document similarity graph,
and a word-level filter inside the transformer encoder prunes low-importance
tokens layer by layer using PageRank over each layer's attention matrix.
"""

from .corpus import (Document, MatchExample, Sentence, SplitRules, Vocab,
                     build_vocab, load_dataset, load_stopwords,
                     remove_stopwords, split_sentences, tokenize)
from .errors import (CheckpointError, DivergedAt, EmptyDocument, InputError,
                     LabelError, LongmatchError, NegativeEntry, NonFinite,
                     NotStochastic, ParseError, SequenceTooShort)
from .metrics import Metrics, compute_metrics
from .pagerank import (PageRankParams, PageRankScores, StochasticMatrix,
                       pagerank, rank_order, validate_stochastic)
from .sentence_filter import (FilteredPair, SentenceGraph, assemble_sequence,
                              build_sentence_graph, export_sentence_graph,
                              filter_pair, select_top_sentences,
                              sentence_similarity)
from .transformer import (ActiveSet, ForwardTrace, ModelConfig, ModelWeights,
                          TokenSequence, attention_layer, backward, forward,
                          prune_tokens, pruning_schedule, word_importance)
from .checkpoint import load_checkpoint, save_checkpoint
from .training import (TrainConfig, TrainState, bce_loss, prepare_examples,
                       train)
from .evaluation import (FilterStrategy, SyntheticTask, alpha_sweep,
                         generate_synthetic, importance_by_strategy,
                         strategy_sweep, time_cost_model)

__version__ = "0.1.0"
