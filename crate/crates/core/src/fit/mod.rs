pub mod cooling;
pub mod iv;
pub mod lsq;
