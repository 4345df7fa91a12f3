// Each integration test binary compiles this module separately and uses only part of it.
#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;
