//! Multi-domain semantic parsing with attention-based sequence-to-sequence
//! models.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`] — dense f64 tensors and a define-by-run autodiff tape,
//! * [`vocab`] — token/id maps with reserved `<unk>` / `<eos>` entries,
//! * [`seq2seq`] — LSTM cells, the bidirectional encoder, attention and the
//!   copy-augmented output layer, built as graph fragments on a tape,
//! * [`arch`] — the six parameter-sharing architectures and model assembly,
//! * [`logic`] — logical-form parsing, printing and execution against a
//!   small knowledge base,
//! * [`corpus`] — synthetic multi-domain corpus generation and dataset IO,
//! * [`training`] — SGD with the fixed learning-rate schedule, checkpoints,
//! * [`decode`] — beam search, denotation-level evaluation, error analysis,
//! * [`harness`] — the experiment commands behind the CLI.

pub mod arch;
pub mod corpus;
pub mod decode;
pub mod grammar;
pub mod harness;
pub mod logic;
pub mod seq2seq;
pub mod tensor;
pub mod training;
pub mod vocab;
