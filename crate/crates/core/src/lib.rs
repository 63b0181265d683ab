pub mod detector;
pub mod eval;
pub mod geometry;
pub mod lexicon;
pub mod providers;
pub mod resolver;
pub mod rewriter;
