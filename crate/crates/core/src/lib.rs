//! Multilingual title generation for e-commerce browse pages.

pub mod cli;
pub mod corpusprep;
pub mod lexicon;
pub mod lmfilter;
pub mod metrics;
pub mod numcore;
pub mod pipeline;
pub mod subword;
pub mod seq2seq;
