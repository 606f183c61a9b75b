use std::net::TcpStream;
use std::time::{Duration, Instant};

use serde_json::Value;
use telehaptic_harness::serve::{spawn, ServeOptions};
use telehaptic_harness::ScenarioSpec;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Ws = WebSocket<MaybeTlsStream<TcpStream>>;

fn read_until(ws: &mut Ws, pred: impl Fn(&Value) -> bool) -> Value {
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline {
        if let Ok(Message::Text(t)) = ws.read() {
            let v: Value = serde_json::from_str(&t).unwrap();
            if pred(&v) {
                return v;
            }
        }
    }
    panic!("no matching console message");
}

#[test]
fn console_drives_the_live_loop() {
    let opts = ServeOptions {
        port: 0,
        ui_port: 0,
        ..ServeOptions::default()
    };
    let handle = spawn(&ScenarioSpec::default(), opts).unwrap();
    let (mut ws, _) = tungstenite::connect(format!("ws://{}", handle.ui_addr)).unwrap();

    let first = read_until(&mut ws, |v| v["type"] == "state" && v["connected"] == true);
    assert_eq!(first["scale"], 2);
    let z0 = first["position_mm"][2].as_f64().unwrap();

    ws.send(Message::Text(r#"{"type":"jog","dz":10}"#.into())).unwrap();
    // scale 2 moves the tool twice the handle travel
    let moved = read_until(&mut ws, |v| {
        v["type"] == "state"
            && v["position_mm"][2]
                .as_f64()
                .is_some_and(|z| (z - (z0 + 20.0)).abs() < 1.0)
    });
    assert!(moved["t_us"].as_u64().unwrap() > first["t_us"].as_u64().unwrap());

    // grip reaches the sim gripper within one state period
    let before = read_until(&mut ws, |v| v["type"] == "state");
    ws.send(Message::Text(r#"{"type":"grip","value":0.6}"#.into())).unwrap();
    let opened = read_until(&mut ws, |v| {
        v["type"] == "state" && v["opening"].as_f64().unwrap() > 0.3
    });
    assert!(opened["t_us"].as_u64().unwrap() > before["t_us"].as_u64().unwrap());

    // a locked axis stays put while the others follow
    let here = read_until(&mut ws, |v| v["type"] == "state");
    let x0 = here["position_mm"][0].as_f64().unwrap();
    ws.send(Message::Text(r#"{"type":"lock","axes":["x"]}"#.into()))
        .unwrap();
    ws.send(Message::Text(r#"{"type":"jog","dx":15,"dy":10,"dz":10}"#.into()))
        .unwrap();
    let shifted = read_until(&mut ws, |v| {
        v["type"] == "state" && v["position_mm"][1].as_f64().is_some_and(|y| (y - 20.0).abs() < 1.0)
    });
    assert!((shifted["position_mm"][0].as_f64().unwrap() - x0).abs() < 0.01);
    assert_eq!(shifted["locks"][0], "x");

    ws.send(Message::Text(r#"{"type":"grip","value":2}"#.into())).unwrap();
    let err = read_until(&mut ws, |v| v["type"] == "error");
    assert!(err["reason"].as_str().is_some());
    read_until(&mut ws, |v| v["type"] == "ledger" && v["beaker_ml"].as_f64().is_some());

    handle.stop();
    assert!(handle.join().unwrap() > 0);
}

#[test]
fn bounded_duration_ends_by_itself() {
    let opts = ServeOptions {
        port: 0,
        ui_port: 0,
        duration_s: Some(0.5),
        ..ServeOptions::default()
    };
    let handle = spawn(&ScenarioSpec::default(), opts).unwrap();
    let end = handle.join().unwrap();
    assert!((500_000..=502_000).contains(&end), "{end}");
}
