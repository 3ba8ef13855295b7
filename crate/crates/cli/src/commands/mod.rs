pub mod evaluate;
pub mod experiment;
pub mod generate;
pub mod prepare;
pub mod report;
pub mod train;
