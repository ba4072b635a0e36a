//! On-disk formats: DRED1 matrices, JSONL qrels/alignments and the operator store.

pub mod dred;
pub mod jsonl;
pub mod store;

pub use dred::{read_matrix, write_matrix};
pub use jsonl::{read_pairs, read_qrels, write_pairs, write_qrels, PairAlignment};
pub use store::{
    list_operators, load_operator, remove_operator, save_operator, OperatorStoreEntry,
};
