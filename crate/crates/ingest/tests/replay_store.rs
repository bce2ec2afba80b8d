use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use twin_core::series::{read_csv, resample, GapPolicy, RawSeries, Unit};
use twin_ingest::replay::{load, replay_into};
use twin_ingest::simulator::{simulate, SimulatorConfig};
use twin_ingest::transport::{FakeTransport, HttpRequest, HttpResponse};
use twin_ingest::{EventStore, PollingSource, SourceConfig, SourceKind};

fn fixture(days: u32, sparse: bool) -> tempfile::NamedTempFile {
    let sim = simulate(&SimulatorConfig { days, significant_change_c: sparse.then_some(0.2), ..SimulatorConfig::default() }).unwrap();
    let f = tempfile::NamedTempFile::new().unwrap();
    sim.write_csv(std::fs::File::create(f.path()).unwrap()).unwrap();
    f
}

#[test]
fn ninety_day_fixture_resamples_to_25920_points() {
    let f = fixture(90, false);
    let store = EventStore::in_memory();
    replay_into(f.path(), &store).unwrap();
    let raw = store.snapshot().raw_series("2Fireplace", Unit::Celsius).unwrap();
    assert_eq!(resample(&raw, 5, GapPolicy::default()).unwrap().len(), 25_920);
}

#[test]
fn replayed_store_resamples_like_the_file() {
    let f = fixture(10, true);
    let store = EventStore::in_memory();
    replay_into(f.path(), &store).unwrap();
    let snap = store.snapshot();
    let readings = read_csv::<f64, _>(std::fs::File::open(f.path()).unwrap()).unwrap();
    for id in snap.sensor_ids() {
        let mut direct: Vec<_> = readings.iter().filter(|r| r.sensor_id == id).map(|r| (r.timestamp, r.value.unwrap())).collect();
        direct.sort_by_key(|p| p.0);
        let a = resample(&RawSeries::new(id, Unit::Celsius, direct), 5, GapPolicy::default()).unwrap();
        let b = resample(&snap.raw_series(id, Unit::Celsius).unwrap(), 5, GapPolicy::default()).unwrap();
        assert_eq!(a, b, "{id}");
    }
    assert_eq!(snap.total_points(), load(f.path()).unwrap().len());
}

#[test]
fn poller_recovers_from_a_rejected_token() {
    let issued = AtomicUsize::new(0);
    let server = Arc::new(FakeTransport::new(move |req: &HttpRequest| {
        if req.url.ends_with("/oauth2/token") {
            let n = issued.fetch_add(1, Ordering::SeqCst);
            return Ok(HttpResponse { status: 200, body: format!(r#"{{"access_token":"t{n}","expires_in":3600}}"#) });
        }
        // The first token issued has been revoked server-side.
        if req.header_value("Authorization") == Some("Bearer t0") {
            return Ok(HttpResponse { status: 401, body: String::new() });
        }
        Ok(HttpResponse {
            status: 200,
            body: r#"{"body":{"devices":[{"_id":"indoor","dashboard_data":{"time_utc":1642759200,"Temperature":21.5}}]}}"#.into(),
        })
    }));
    let config = SourceConfig::new("station", SourceKind::PollOauthPassword)
        .with_endpoint("https://api.example.test")
        .with_credential("client_id", "id")
        .with_credential("client_secret", "s")
        .with_credential("username", "u")
        .with_credential("password", "p");
    let store = EventStore::in_memory();
    let mut source = PollingSource::new(config, server.clone()).unwrap();
    assert_eq!(source.poll(&store, 0).unwrap().observations.len(), 1);
    assert_eq!(source.tokens().requests(), 2);
    assert_eq!(server.count(), 4);
    assert_eq!(store.snapshot().points("indoor").unwrap().len(), 1);
    source.poll(&store, 300).unwrap();
    assert_eq!(source.tokens().requests(), 2);
}
