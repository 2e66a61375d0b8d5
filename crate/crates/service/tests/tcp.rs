use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::process::Command;
use std::thread;

use qtask_core::tasks;
use qtask_service::{wire, RpcError, Server, Service, ServiceConfig, Session, TcpClient};
use serde_json::{json, Value};

fn server(seed: u64) -> Server {
    let mut cfg = ServiceConfig::with_seed(seed);
    cfg.service.slice_ns = 200_000;
    Server::bind(Service::boot(cfg).unwrap(), "127.0.0.1:0").unwrap()
}

fn connect(srv: &Server) -> Session<TcpClient> {
    let mut c = TcpClient::connect(srv.local_addr()).unwrap();
    c.poll = std::time::Duration::from_millis(2);
    Session::new(c)
}

#[test]
fn concurrent_clients_share_one_engine() {
    let srv = server(1);
    let mut a = connect(&srv);
    a.load_source("hist", tasks::HISTOGRAM).unwrap();
    a.set_parameters(&[20_000, 0, 10_000, 500]).unwrap();
    a.start().unwrap();

    let pollers: Vec<_> = (0..2)
        .map(|_| {
            let addr = srv.local_addr();
            thread::spawn(move || {
                let mut c = Session::new(TcpClient::connect(addr).unwrap());
                let mut last = (0u64, 0u32);
                for _ in 0..50 {
                    let st = c.status().unwrap();
                    assert_eq!(st.task_name, "hist");
                    assert!(
                        st.now_ns >= last.0 && st.progress >= last.1,
                        "{st:?} after {last:?}"
                    );
                    last = (st.now_ns, st.progress);
                }
            })
        })
        .collect();

    let mut b = connect(&srv);
    match b.start() {
        Err(RpcError::Remote { code, .. }) => assert_eq!(code, "TASK_RUNNING"),
        other => panic!("{other:?}"),
    }
    for p in pollers {
        p.join().unwrap();
    }

    let mut ids = BTreeSet::new();
    let mut bytes = 0;
    let st = a
        .run_until_done(0, |id, data| {
            assert!(ids.insert(id), "box {id} delivered twice");
            bytes += data.len();
        })
        .unwrap();
    assert_eq!((st.state.as_str(), st.progress), ("FINISHED", 20_000));
    assert_eq!((ids.len(), bytes), (40, 160_000));
    let service = srv.shutdown();
    assert_eq!(service.engine().heap().allocated_bytes(), 0);
}

#[test]
fn restart_keeps_engine_state() {
    let srv = server(2);
    let mut c = connect(&srv);
    c.load_source("basic", tasks::BASIC).unwrap();
    c.set_parameters(&[5, 3]).unwrap();
    c.start().unwrap();
    let st = c.run_until_done(0, |_, _| {}).unwrap();
    let now = st.now_ns;
    drop(c);

    let service = srv.shutdown();
    let cfg = service.config().clone();
    let service = Service::attach(service.into_engine(), cfg).unwrap();
    let srv = Server::bind(service, "127.0.0.1:0").unwrap();
    let mut c = connect(&srv);
    let after = c.status().unwrap();
    assert_eq!(
        (
            after.state.as_str(),
            after.task_name.as_str(),
            after.last_return_code
        ),
        ("FINISHED", "basic", 0)
    );
    assert_eq!(
        (after.run_start_ns, after.run_end_ns),
        (st.run_start_ns, st.run_end_ns)
    );
    assert!(after.now_ns >= now);
    c.start().unwrap();
    let st = c.run_until_done(0, |_, b| assert_eq!(b.len(), 40)).unwrap();
    assert_eq!(st.progress, 5);
    srv.shutdown();
}

fn raw_call(s: &mut TcpStream, body: &[u8]) -> Value {
    wire::write_message(s, body).unwrap();
    serde_json::from_slice(&wire::read_message(s).unwrap().unwrap()).unwrap()
}

#[test]
fn every_request_gets_one_answer() {
    let srv = server(3);
    let mut s = TcpStream::connect(srv.local_addr()).unwrap();
    let r = raw_call(&mut s, br#"{"id":7,"method":"getStatus","params":{}}"#);
    assert_eq!((r["id"].as_u64(), r["ok"].as_bool()), (Some(7), Some(true)));
    let r = raw_call(&mut s, br#"{"id":7,"method":"getStatus","params":{}}"#);
    assert_eq!(r["error"]["code"], "DUPLICATE_ID");
    let r = raw_call(&mut s, b"not json");
    assert_eq!(r["error"]["code"], "PARSE_ERROR");
    let r = raw_call(&mut s, br#"{"id":8,"method":"frobnicate"}"#);
    assert_eq!(r["error"]["code"], "METHOD_NOT_FOUND");

    // An oversized length prefix closes the connection without a reply.
    s.write_all(&u32::MAX.to_le_bytes()).unwrap();
    let mut buf = [0u8; 1];
    assert_eq!(s.read(&mut buf).unwrap_or(0), 0);
    // The server keeps serving other clients.
    let mut c = connect(&srv);
    assert_eq!(
        c.call("getFirmwareHash", json!({})).unwrap()["hash"]
            .as_str()
            .unwrap()
            .len(),
        32
    );
    srv.shutdown();
}

#[test]
fn qtaskd_reports_port_in_use() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let out = Command::new(env!("CARGO_BIN_EXE_qtaskd"))
        .args(["serve", "--listen", &addr, "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot listen"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[engine]\narena_bytes = 0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qtaskd"))
        .args([
            "serve",
            "--config",
            path.to_str().unwrap(),
            "--listen",
            "127.0.0.1:0",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
