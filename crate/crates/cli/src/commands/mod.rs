pub mod augment;
pub mod contextual;
pub mod eval;
pub mod hotwords;
pub mod mine;
pub mod synth;
pub mod train;
