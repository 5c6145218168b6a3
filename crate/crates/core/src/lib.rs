//! Multi-observer state estimation for a series of jacketed CSTRs.
//!
//! A bank of estimators (extended Luenberger observer, EKF, UKF,
//! Gauss–Hermite quadrature KF and a bootstrap particle filter) runs in
//! parallel on the same measurements; at every sample the switched observer
//! copies the member with the lowest normalized L1 + log-mismatch cost.

pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod observability;
pub mod observers;
pub mod seeds;
pub mod switching;
