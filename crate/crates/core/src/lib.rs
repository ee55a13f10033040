pub mod bbsoc;
pub mod benchmarks;
pub mod collocation;
pub mod dynamics;
pub mod elements;
pub mod guess;
pub mod ode;
pub mod problem;
pub mod reference;
pub mod report;
pub mod transfer;
