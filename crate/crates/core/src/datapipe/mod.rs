//! Corpus ingestion, taxonomies, label padding and triplet mining.

pub mod corpus;
pub mod derive;
pub mod mining;
pub mod rouge;
pub mod taxonomy;
pub mod wordvec;

pub use corpus::{load_corpus, parse_corpus, read_triplets, write_triplets, Corpus, Document, DomainMode, Triplet};
pub use derive::{derive_taxonomy, kmeans, TfIdf};
pub use mining::{
    mine_triplets_metadata, mine_triplets_rouge, pairwise_rouge_f1, satisfies, RougeMiningConfig,
    DEFAULT_TRIPLET_COUNT,
};
pub use rouge::{lcs_len, rouge_l, rouge_tokens, RougeScores};
pub use taxonomy::{HierarchyLabels, Taxonomy, LEVEL_SEPARATOR};
pub use wordvec::{map_category_to_hierarchy, WordVectors};
