pub mod tensor;
pub mod data;
pub mod hierarchy;
pub mod leadlag;
pub mod decay;
pub mod hillmp;
pub mod model;
pub mod synth;
pub mod selfcheck;
pub mod cli;
