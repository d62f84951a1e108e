#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod certify;
pub mod linalg;
pub mod lyap;
pub mod model;
pub mod poly;
pub mod rng;
pub mod sdp;
pub mod sim;
pub mod sos;
