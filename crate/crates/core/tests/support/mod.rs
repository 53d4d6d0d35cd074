pub mod oracles;
pub mod normalization;
