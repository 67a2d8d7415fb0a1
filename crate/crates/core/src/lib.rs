pub mod cli;
pub mod control;
pub mod lut;
pub mod raceline;
pub mod sim;
pub mod tire_fit;
pub mod vehicle;
