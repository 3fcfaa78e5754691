#![allow(dead_code)]

pub mod energy;
pub mod env_ref;
pub mod grad;
