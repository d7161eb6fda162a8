//! Campaign server for live, human-in-the-loop evaluation.
//!
//! Each campaign is an [`activeeval_core::CampaignState`] behind a per-campaign
//! write lock. Every mutation is appended to the campaign's JSONL event log
//! before it is committed, with a state snapshot every
//! [`store::SNAPSHOT_EVERY`] events. On startup the server rebuilds every
//! campaign from its log; training is replayed from the recorded seeds, so a
//! recovered campaign is bit-identical to the one that crashed.
//!
//! Clients never hold locks: a suggestion carries a token bound to the
//! campaign version, and outcomes posted with an outdated token get 409.

mod api;
pub mod error;
pub mod events;
pub mod store;

use std::net::SocketAddr;

pub use api::{router, IDEMPOTENCY_HEADER};
pub use error::{Result, ServiceError};
pub use events::{CampaignEvent, EventKind, EventLog};
pub use store::{recover, AppState, CreateRequest, CreateResponse, OutcomesRequest, OutcomesResponse, Recovered};

/// Serves the API on `addr` until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
