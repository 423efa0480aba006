pub mod abc_router;
pub mod abc_sender;
pub mod engine;
pub mod flight;
pub mod fluid;
pub mod legacy;
pub mod links;
pub mod metrics;
pub mod receiver;
pub mod topk;
pub mod types;
pub mod wifi_estimator;
