//! Composes the twin: configuration, capability report, shared operations,
//! the `/v1` HTTP API and the `twin` command line.

pub mod api;
pub mod capability;
pub mod cli;
pub mod config;
pub mod ops;

use std::fs::File;
use std::io::BufReader;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use anyhow::Context;
use twin_core::BehaviorMatrix64;
use twin_ingest::{load_static_source, EventStore, PollingSource, UreqTransport};

pub use api::{router, AppState};
pub use capability::CapabilityReport;
pub use config::TwinConfig;

pub fn open_store(config: &TwinConfig) -> anyhow::Result<Arc<EventStore>> {
    Ok(Arc::new(match &config.store_path {
        Some(dir) => EventStore::open(dir).with_context(|| format!("opening store {}", dir.display()))?,
        None => EventStore::in_memory(),
    }))
}

pub fn load_matrix(config: &TwinConfig) -> anyhow::Result<Option<BehaviorMatrix64>> {
    let Some(path) = &config.recommender.behavior_matrix else { return Ok(None) };
    let file = File::open(path).with_context(|| format!("opening behavior matrix {}", path.display()))?;
    let m = BehaviorMatrix64::read_csv(BufReader::new(file)).with_context(|| format!("reading behavior matrix {}", path.display()))?;
    Ok(Some(m))
}

/// Loads replay and simulator sources. A persisted store that already holds data
/// was loaded on an earlier start, so it is left as is rather than duplicated.
pub fn load_static_sources(config: &TwinConfig, store: &EventStore) -> anyhow::Result<usize> {
    if store.dir().is_some() && !store.snapshot().is_empty() {
        return Ok(0);
    }
    let mut total = 0;
    for source in config.sources.iter().filter(|s| !s.kind.is_polling()) {
        let n = load_static_source(source, store)?;
        log::info!("source {}: loaded {n} observation(s)", source.source_id);
        total += n;
    }
    Ok(total)
}

/// Starts one polling thread per live source; they stop when `stop` is set.
pub fn spawn_pollers(config: &TwinConfig, store: &Arc<EventStore>, stop: &Arc<AtomicBool>) -> anyhow::Result<Vec<std::thread::JoinHandle<()>>> {
    let transport = Arc::new(UreqTransport::default());
    let mut handles = Vec::new();
    for source in config.sources.iter().filter(|s| s.kind.is_polling()) {
        let poller = PollingSource::new(source.clone(), transport.clone())?;
        let (store, stop) = (store.clone(), stop.clone());
        handles.push(std::thread::Builder::new().name(format!("poll-{}", source.source_id)).spawn(move || poller.run(&store, &stop))?);
    }
    Ok(handles)
}

/// Binds, warms the store in the background, and serves until Ctrl-C.
pub async fn serve(config: TwinConfig) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(&config.listen).await.with_context(|| format!("binding {}", config.listen))?;
    let store = open_store(&config)?;
    let matrix = load_matrix(&config)?;
    let state = Arc::new(AppState::new(config, store.clone(), matrix));
    log::info!("listening on {}; highest capability: {}", state.config.listen, state.capability.highest().unwrap_or("none"));

    let stop = Arc::new(AtomicBool::new(false));
    let failed = Arc::new(tokio::sync::Notify::new());
    let (warm, poll_stop, poll_store, warm_failed) = (state.clone(), stop.clone(), store.clone(), failed.clone());
    let warm_up = tokio::task::spawn_blocking(move || -> anyhow::Result<Vec<std::thread::JoinHandle<()>>> {
        let loaded = load_static_sources(&warm.config, &warm.store).and_then(|_| {
            warm.mark_ready();
            spawn_pollers(&warm.config, &poll_store, &poll_stop)
        });
        if loaded.is_err() {
            warm_failed.notify_one();
        }
        loaded
    });

    let server = axum::serve(listener, router(state)).with_graceful_shutdown(async move {
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = failed.notified() => {}
        }
    });
    let served = server.await.context("server failed");
    stop.store(true, std::sync::atomic::Ordering::SeqCst);
    let pollers = warm_up.await.context("startup task panicked")?.context("loading startup sources")?;
    for h in pollers {
        let _ = h.join();
    }
    served
}
