//! HTTP service for jitflow: module catalog, flow storage and validation,
//! runs with server-sent event streams and approval gates, and the JIT
//! code generation and flow synthesis endpoints. All JSON endpoints live
//! under `/api/v1`; an optional static directory is served at `/`.

pub mod api;
pub mod runs;
pub mod runtime;
pub mod store;

use std::collections::BTreeMap;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use jitflow_core::model::FlowSource;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tower_http::services::ServeDir;

pub use api::AppState;
pub use runs::{RunError, RunManager, RunSnapshot};
pub use runtime::Runtime;
pub use store::{FlowStore, RunStatus, RunStore, StoreError};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "jitflow-data";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("service I/O failed: {0}")]
    Io(#[from] io::Error),

    #[error(transparent)]
    Llm(#[from] jitflow_llm::LlmError),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub bind: SocketAddr,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: data_dir.into(), static_dir: None, bind: DEFAULT_BIND.parse().unwrap() }
    }

    /// `JITFLOW_DATA_DIR` and `JITFLOW_STATIC_DIR`, loopback bind.
    pub fn from_vars(vars: &BTreeMap<String, String>) -> Self {
        let get = |k: &str| vars.get(k).filter(|v| !v.is_empty()).map(PathBuf::from);
        let mut cfg = Self::new(get("JITFLOW_DATA_DIR").unwrap_or_else(|| DEFAULT_DATA_DIR.into()));
        cfg.static_dir = get("JITFLOW_STATIC_DIR");
        cfg
    }
}

/// An assembled service: router plus the runtime it depends on.
pub struct Service {
    pub state: Arc<AppState>,
    pub router: Router,
    _runtime: Runtime,
}

impl Service {
    /// Opens the stores, closes runs interrupted by a previous process and
    /// builds the runtime from `vars`.
    pub async fn build(config: &ServiceConfig, vars: BTreeMap<String, String>) -> Result<Self, ServiceError> {
        let flows = Arc::new(FlowStore::open(&config.data_dir)?);
        let run_store = Arc::new(RunStore::open(&config.data_dir)?);
        let closed = run_store.close_interrupted()?;
        if !closed.is_empty() {
            tracing::warn!(count = closed.len(), "closed runs interrupted by a restart");
        }
        let runtime = Runtime::from_vars(Some(flows.clone() as Arc<dyn FlowSource>), vars).await?;
        let state = Arc::new(AppState {
            flows,
            runs: Arc::new(RunManager::new(run_store, runtime.ctx.clone())),
            catalog: runtime.ctx.catalog.clone(),
            gateway: runtime.gateway.clone(),
        });
        let mut router = api::router(state.clone());
        if let Some(dir) = &config.static_dir {
            router = router.fallback_service(ServeDir::new(dir));
        }
        Ok(Self { state, router, _runtime: runtime })
    }
}

/// A service listening in the background.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<()>>,
    _service_state: Arc<AppState>,
    _runtime: Runtime,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for the server task.
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Binds `config.bind` (port 0 picks a free port) and serves in the
/// background.
pub async fn spawn(config: &ServiceConfig, vars: BTreeMap<String, String>) -> Result<ServiceHandle, ServiceError> {
    let service = Service::build(config, vars).await?;
    let listener = TcpListener::bind(config.bind).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let router = service.router;
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    tracing::info!(%addr, data_dir = %config.data_dir.display(), "jitflow service listening");
    Ok(ServiceHandle {
        addr,
        shutdown: Some(tx),
        task: Some(task),
        _service_state: service.state,
        _runtime: service._runtime,
    })
}

/// Serves until Ctrl-C.
pub async fn serve(config: &ServiceConfig, vars: BTreeMap<String, String>) -> Result<(), ServiceError> {
    let handle = spawn(config, vars).await?;
    println!("listening on {}", handle.base_url());
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await;
    Ok(())
}
