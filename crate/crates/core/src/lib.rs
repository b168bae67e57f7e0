pub mod adal;
pub mod experiments;
pub mod multivariate;
pub mod parallel;
pub mod qp;
pub mod risk;
pub mod systemic;
pub mod two_stage;
pub mod wireless;
