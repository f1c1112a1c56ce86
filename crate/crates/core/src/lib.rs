pub mod cli;
pub mod eval;
pub mod pose;
pub mod room;
pub mod sim;
pub mod stabilizer;
pub mod store;
