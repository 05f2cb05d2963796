pub mod chain;
pub mod ordering;
pub mod presync;
pub mod rules;
pub mod sim;
