//! HTTP/JSON and WebSocket service for live sessions, training jobs and
//! session reports. State lives in flat files under a data directory.

mod error;
mod hub;
mod paced;
mod routes;
mod state;
pub mod store;

use std::net::SocketAddr;

pub use error::{ApiError, ApiResult};
pub use paced::PacedSource;
pub use routes::router;
pub use state::{AppState, ServiceConfig};

/// Serves on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and serves in a background task. Returns the bound address.
pub async fn spawn(
    addr: SocketAddr,
    config: ServiceConfig,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>, tokio::sync::oneshot::Sender<()>)> {
    let state = AppState::open(config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let handle = tokio::spawn(serve(listener, state, async move {
        let _ = rx.await;
    }));
    Ok((local, handle, tx))
}
