//! Dataset files, gold encoding, vocabulary, pretrained vectors, corpus
//! statistics and batching.

mod batch;
mod dataset;
mod embeddings;
mod encoding;
mod stats;
mod vocab;

pub use batch::{batch_order, make_batches, Batch};
pub use dataset::{load_dataset, load_predictions, read_dataset, write_jsonl};
pub use embeddings::{load_embeddings, read_pretrained, read_pretrained_from, PretrainedRows, UNKNOWN_ROW_BOUND};
pub use encoding::{collapsed_tags, encode_gold, encode_gold_with_conflicts, CellConflict};
pub use stats::{categorize_overlap, corpus_stats, CorpusStats, OverlapCategory, BOTH_SHARED_CATEGORY};
pub use vocab::{build_vocab, Vocabulary, PAD, PAD_INDEX, UNK, UNK_INDEX};
