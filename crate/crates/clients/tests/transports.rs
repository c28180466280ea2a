use std::net::TcpListener;
use std::time::{Duration, Instant};

use forge_clients::config::env_var_name;
use forge_clients::mock::MockBackend;
use forge_clients::protocol::RemoteClient;
use forge_clients::{
    BackendKind, BackendsConfig, ClientEndpoint, ClientError, DepthClient, EndpointConfig, LocateClient, LocateQuery,
    SegmentClient, Transport,
};
use forge_core::relations::Instance;
use forge_core::{BBox, Raster};

fn mock_backend_cmd() -> Vec<String> {
    vec![env!("CARGO_BIN_EXE_forge-mock-backend").to_string()]
}

#[test]
fn subprocess_depth_matches_in_process_mock() {
    let ep = ClientEndpoint::subprocess(BackendKind::Depth, mock_backend_cmd());
    let client = RemoteClient::new(ep).unwrap();
    let img = Raster::filled(7, 5, 3, 40u8).unwrap();
    assert_eq!(client.estimate(&img).unwrap(), MockBackend::default().estimate(&img).unwrap());
}

#[test]
fn subprocess_propagates_typed_errors() {
    let client = RemoteClient::new(ClientEndpoint::subprocess(BackendKind::Segment, mock_backend_cmd())).unwrap();
    let err = client.segment(&Raster::filled(4, 4, 3, 9u8).unwrap(), None).unwrap_err();
    assert!(matches!(err, ClientError::NoForeground), "{err:?}");

    let client = RemoteClient::new(ClientEndpoint::subprocess(BackendKind::Locate, mock_backend_cmd())).unwrap();
    let q = LocateQuery {
        background: Raster::filled(8, 8, 3, 0u8).unwrap(),
        depth: forge_clients::mock::ramp_depth(8, 8).unwrap(),
        instruction: "Place the cup above the teapot.".into(),
        annotations: vec![Instance { id: 0, name: "plate".into(), bbox: BBox::new(0.1, 0.1, 0.2, 0.2).unwrap() }],
    };
    match client.locate(&q).unwrap_err() {
        ClientError::Rejected { code, .. } => assert_eq!(code, forge_clients::ErrorCode::UnknownAnchor),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_program_is_unavailable() {
    let ep = ClientEndpoint::subprocess(BackendKind::Depth, vec!["/nonexistent/forge-backend".into()]);
    let err = RemoteClient::new(ep).unwrap().estimate(&Raster::filled(2, 2, 3, 0u8).unwrap()).unwrap_err();
    assert!(matches!(err, ClientError::Unavailable { .. }), "{err:?}");
}

#[test]
fn http_connection_refused_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let ep = ClientEndpoint::http(BackendKind::Depth, format!("http://127.0.0.1:{port}")).with_timeout(5.0);
    let err = RemoteClient::new(ep).unwrap().estimate(&Raster::filled(2, 2, 3, 0u8).unwrap()).unwrap_err();
    assert!(matches!(err, ClientError::Unavailable { .. }), "{err:?}");
}

#[test]
fn http_silent_server_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hold = std::thread::spawn(move || {
        let conn = listener.accept();
        std::thread::sleep(Duration::from_secs(3));
        drop(conn);
    });
    let ep = ClientEndpoint::http(BackendKind::Depth, format!("http://{addr}")).with_timeout(0.5);
    let start = Instant::now();
    let err = RemoteClient::new(ep).unwrap().estimate(&Raster::filled(2, 2, 3, 0u8).unwrap()).unwrap_err();
    assert!(matches!(err, ClientError::Timeout { .. }), "{err:?}");
    assert!(start.elapsed() < Duration::from_secs(3));
    hold.join().unwrap();
}

#[test]
fn config_resolution_and_env_override() {
    let cfg: BackendsConfig = toml::from_str(
        r#"
        timeout_secs = 12
        [depth]
        url = "http://depth:1"
        [composite]
        command = ["forge", "mock-backend"]
        timeout_secs = 99
        "#,
    )
    .unwrap();
    let eps = cfg.resolve(|_| None).unwrap();
    assert_eq!(eps[0].transport, Transport::Http { url: "http://depth:1".into() });
    assert_eq!(eps[0].timeout_secs, 12.0);
    assert_eq!(eps[1].transport, Transport::Mock);
    assert_eq!(eps[4].timeout_secs, 99.0);

    let eps = cfg.resolve(|k| (k == env_var_name(BackendKind::Segment)).then(|| "http://seg:2".to_string())).unwrap();
    assert_eq!(eps[1].transport, Transport::Http { url: "http://seg:2".into() });
    assert_eq!(env_var_name(BackendKind::Composite), "FORGE_BACKEND_COMPOSITE_URL");

    let both = BackendsConfig {
        depth: Some(EndpointConfig {
            url: Some("http://x".into()),
            command: Some(vec!["y".into()]),
            timeout_secs: None,
        }),
        ..Default::default()
    };
    assert!(matches!(both.resolve(|_| None), Err(ClientError::Config(_))));
    assert!(toml::from_str::<BackendsConfig>("[depth]\nport = 3").is_err());
}
