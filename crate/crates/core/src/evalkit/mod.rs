//! Fine-tuning over the token path, task metrics, and analyses comparing the
//! two input paths of the upper encoder.

pub mod analysis;
pub mod data;
pub mod finetune;
pub mod metrics;

pub use analysis::{
    correlation_of, input_embeddings, paragraph_similarity, paragraphs, pca_project, pearson,
    representation_correlation, token_doc_vector, wl_for_documents, wl_metric, CorrelationReport,
    EmbeddingMode, ParagraphSimilarity, Projection, HISTOGRAM_BINS,
};
pub use data::{
    encode_pair, encode_span, encode_tagged, load_pairs, load_span_examples, load_tagged,
    pair_jsonl, span_jsonl, tagged_jsonl, EncodedSpan, LabeledSequence, PairExample,
    SpanQaExample,
};
pub use finetune::{
    evaluate, finetune, finetune_pair_classification, finetune_span_qa,
    finetune_token_classification, EpochLog, FinetuneConfig, FinetuneReport, TaskData,
    TaskMetrics,
};
pub use metrics::{argmax, best_span, span_f1, span_metrics, ConfusionMatrix, Span, SpanMetrics};
