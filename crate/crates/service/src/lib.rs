//! HTTP service over a single corpus: matching, inverse matching,
//! relevance annotations, triage decisions and evaluation metrics.
//!
//! Annotations and decisions live in an append-only JSONL log under the
//! data directory; state after a restart is the fold of that log.

mod config;
mod error;
mod http;
mod log;
mod service;

use std::sync::Arc;

pub use config::{ConfigError, ServiceConfig};
pub use error::ApiError;
pub use http::router;
pub use log::{Event, EventLog, LogError, TriageAction, TriageDecision};
pub use service::{
    AnnotationRequest, CorpusSummary, DecisionRequest, InverseRequest, InverseResponse, MatchRequest, MatchResponse,
    MetricsResponse, RelatedReport, Service, StartupError, Suggestion, UnmatchedEntry, UnmatchedResponse,
};

/// Opens the service and serves it on `config.bind` until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), StartupError> {
    let service = tokio::task::spawn_blocking(move || Service::open(config))
        .await
        .map_err(|e| std::io::Error::other(e.to_string()))??;
    let listener = tokio::net::TcpListener::bind(&service.config().bind).await?;
    ::log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(service)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
