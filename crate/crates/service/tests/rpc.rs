use std::fmt::Write as _;

use md5::{Digest, Md5};
use qtask_core::tasks;
use qtask_core::vm::hostcalls::{self, Kind};
use qtask_service::{embedded, EmbeddedClient, RpcError, ServiceConfig, Session};
use serde_json::json;

fn session(seed: u64, sigma: f64) -> Session<EmbeddedClient> {
    let mut cfg = ServiceConfig::with_seed(seed);
    cfg.fabric.qubit.readout_sigma = sigma;
    embedded(cfg).unwrap()
}

fn code(r: Result<impl std::fmt::Debug, RpcError>) -> String {
    match r {
        Err(e) => e.code().unwrap_or("local").to_owned(),
        Ok(v) => panic!("expected an error, got {v:?}"),
    }
}

fn pairs(bytes: &[u8]) -> Vec<(i32, i32)> {
    bytes
        .chunks_exact(8)
        .map(|c| {
            (
                i32::from_le_bytes(c[..4].try_into().unwrap()),
                i32::from_le_bytes(c[4..].try_into().unwrap()),
            )
        })
        .collect()
}

#[test]
fn firmware_hash_is_digest_of_host_interface() {
    let mut text = String::from("qtask host interface v1\n");
    for c in hostcalls::TABLE {
        let kind = |k: &Kind| match k {
            Kind::Void => "void",
            Kind::U32 => "u32",
            Kind::Ptr => "ptr",
        };
        let mut params: Vec<&str> = c.params.iter().map(kind).collect();
        if c.variadic {
            params.push("...");
        }
        writeln!(
            text,
            "{} {}({}) -> {}",
            c.id,
            c.name,
            params.join(", "),
            kind(&c.ret)
        )
        .unwrap();
    }
    let want: String = Md5::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let mut s = session(1, 5000.0);
    assert_eq!(s.firmware_hash().unwrap(), want);
}

#[test]
fn basic_task_end_to_end() {
    let mut s = session(3, 0.0);
    s.load_source("basic", tasks::BASIC).unwrap();
    let st = s.status().unwrap();
    assert_eq!(
        (st.state.as_str(), st.task_name.as_str()),
        ("TASK_LOADED", "basic")
    );

    s.set_parameters(&[3, 0]).unwrap();
    s.start().unwrap();
    let mut got = Vec::new();
    let st = s
        .run_until_done(200_000_000, |id, b| got.push((id, b)))
        .unwrap();
    assert_eq!(
        (st.state.as_str(), st.progress, st.last_return_code),
        ("FINISHED", 3, 0)
    );
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].1.len(), 24);
    // Without readout noise every pair sits exactly on a configured cluster.
    let means = s.fabric_config().unwrap().qubit.cluster_means;
    for (i, q) in pairs(&got[0].1) {
        assert!(
            means.iter().any(|m| m[0] as i32 == i && m[1] as i32 == q),
            "({i}, {q})"
        );
    }
    assert_eq!(code(s.fetch_box(got[0].0)), "NOT_FOUND");
    assert!(s.list_boxes().unwrap().is_empty());
}

#[test]
fn wrong_parameter_count_is_reported() {
    let mut s = session(3, 0.0);
    s.load_source("basic", tasks::BASIC).unwrap();
    s.set_parameters(&[1, 2, 3]).unwrap();
    s.start().unwrap();
    let st = s
        .run_until_done(1_000_000, |_, _| panic!("no box expected"))
        .unwrap();
    assert_eq!(st.last_return_code, -1);
    assert_eq!(
        s.errors().unwrap(),
        [
            "Please provide exactly 2 parameters (got 3)",
            "task returned -1"
        ]
    );
}

#[test]
fn compile_errors_leave_engine_untouched() {
    let mut s = session(1, 0.0);
    s.load_source("ok", tasks::EMPTY).unwrap();
    let e = s
        .load_source("bad", "int task_entry() { return 0 }")
        .unwrap_err();
    match e {
        RpcError::Remote {
            code,
            message,
            data,
        } => {
            assert_eq!(code, "COMPILE_ERROR");
            assert!(message.starts_with("<task>:1:"), "{message}");
            let diags = &data.unwrap()["diagnostics"];
            assert_eq!(diags[0]["severity"], "error");
        }
        other => panic!("{other:?}"),
    }
    let st = s.status().unwrap();
    assert_eq!(
        (st.state.as_str(), st.task_name.as_str()),
        ("TASK_LOADED", "ok")
    );
}

#[test]
fn running_task_rejects_load_and_start() {
    let mut s = session(1, 0.0);
    s.load_source("hist", tasks::HISTOGRAM).unwrap();
    s.set_parameters(&[1000, 0, 10_000, 100]).unwrap();
    s.start().unwrap();
    s.wait(1_000_000);
    assert!(s.status().unwrap().is_running());
    assert_eq!(code(s.load_source("other", tasks::EMPTY)), "TASK_RUNNING");
    assert_eq!(code(s.start()), "TASK_RUNNING");
    assert_eq!(code(s.set_parameters(&[1])), "TASK_RUNNING");
    let bin = s.compile("other", tasks::EMPTY).unwrap();
    assert_eq!(code(s.load_binary(&bin)), "TASK_RUNNING");
    s.stop().unwrap();
    s.wait(1);
    let st = s.status().unwrap();
    assert_eq!(
        (st.state.as_str(), st.last_return_code),
        ("FINISHED", i32::MIN)
    );
}

#[test]
fn boxes_stream_while_running() {
    let mut s = session(2, 5000.0);
    s.load_source("hist", tasks::HISTOGRAM).unwrap();
    s.set_parameters(&[1000, 0, 10_000, 100]).unwrap();
    s.start().unwrap();
    s.wait(3_000_000);
    assert!(s.status().unwrap().is_running());
    let early = s.drain_boxes().unwrap();
    assert!(!early.is_empty());
    let mut rest = Vec::new();
    let st = s
        .run_until_done(1_000_000, |id, b| rest.push((id, b)))
        .unwrap();
    assert_eq!(st.last_return_code, 0);
    let ids: Vec<u32> = early.iter().chain(&rest).map(|(id, _)| *id).collect();
    assert_eq!(ids.len(), 10);
    assert!(ids.windows(2).all(|w| w[0] < w[1]), "{ids:?}");
    assert!(early.iter().chain(&rest).all(|(_, b)| b.len() == 800));
    assert_eq!(s.transport.service().engine().heap().allocated_bytes(), 0);
}

#[test]
fn binary_and_source_loads_agree() {
    let mut s = session(4, 0.0);
    let bin = s.compile("basic", tasks::BASIC).unwrap();
    s.load_binary(&bin).unwrap();
    assert_eq!(s.status().unwrap().task_name, "basic");
    assert_eq!(code(s.load_binary(&bin[..bin.len() - 1])), "INVALID_BINARY");
    assert_eq!(
        code(s.call("loadBinaryTask", json!({ "binary": "***" }))),
        "INVALID_PARAMS"
    );
}

#[test]
fn registers_are_reachable_and_charged() {
    let mut s = session(1, 0.0);
    let c0 = s.clock().unwrap();
    assert_eq!(
        s.read_register(0x0000).unwrap(),
        qtask_fabric::regmap::FABRIC_ID_VALUE
    );
    s.write_register(0x2000, 77).unwrap();
    assert_eq!(s.read_register(0x2000).unwrap(), 77);
    assert_eq!(s.read_register_block(0x3020, 16).unwrap().len(), 16);
    let c1 = s.clock().unwrap();
    assert_eq!(c1.total("bus_read") - c0.total("bus_read"), 18 * 306);
    assert_eq!(c1.total("bus_write") - c0.total("bus_write"), 323);
    assert_eq!(code(s.read_register(0x7FFF_FFF0)), "FABRIC_ERROR");
}

#[test]
fn method_errors() {
    let mut s = session(1, 0.0);
    assert_eq!(code(s.call("noSuchMethod", json!({}))), "METHOD_NOT_FOUND");
    assert_eq!(
        code(s.call("fetchBox", json!({ "id": "x" }))),
        "INVALID_PARAMS"
    );
    assert_eq!(
        code(s.call("getStatus", json!({ "extra": 1 }))),
        "INVALID_PARAMS"
    );
    assert_eq!(code(s.call("startTask", json!({}))), "NO_TASK_LOADED");
    assert_eq!(
        code(s.call("runBundledExperiment", json!({ "name": "nope" }))),
        "NOT_FOUND"
    );

    let svc = s.transport.service_mut();
    let out: serde_json::Value =
        serde_json::from_slice(&svc.handle_bytes(b"{\"id\": 9, \"method\": 3}")).unwrap();
    assert_eq!(out["ok"], false);
    assert_eq!(out["id"], 9);
    assert_eq!(out["error"]["code"], "PARSE_ERROR");
}

#[test]
fn bundled_experiment_runs_in_one_call() {
    let mut s = session(5, 0.0);
    let r = s
        .call(
            "runBundledExperiment",
            json!({ "name": "basic", "params": [4, 3] }),
        )
        .unwrap();
    assert_eq!(r["state"], "FINISHED");
    assert_eq!(r["boxes"].as_array().unwrap().len(), 1);
    assert_eq!(r["boxes"][0]["size"], 32);
    assert_eq!(r["errors"], json!([]));
    assert_eq!(r["timedOut"], false);
    // Ground-state readout without noise: every pair is the level-0 mean.
    use base64::Engine as _;
    let data = base64::engine::general_purpose::STANDARD
        .decode(r["boxes"][0]["data"].as_str().unwrap())
        .unwrap();
    assert!(pairs(&data).iter().all(|&p| p == (100_000, 35_000)));
}

#[test]
fn golden_exchange() {
    let mut s = session(1, 0.0);
    let svc = s.transport.service_mut();
    let out = svc.handle_bytes(br#"{"id":1,"method":"getFirmwareHash","params":{}}"#);
    let want = format!(
        r#"{{"id":1,"ok":true,"result":{{"hash":"{}"}}}}"#,
        hostcalls::hex(&hostcalls::firmware_hash())
    );
    assert_eq!(String::from_utf8(out).unwrap(), want);
    let out = svc.handle_bytes(br#"{"id":2,"method":"startTask"}"#);
    assert_eq!(
        String::from_utf8(out).unwrap(),
        r#"{"id":2,"ok":false,"error":{"code":"NO_TASK_LOADED","message":"CONTROL_OP rejected: NO_TASK_LOADED (no task loaded)"}}"#
    );
}

#[test]
fn config_file_parsing() {
    let cfg = ServiceConfig::from_toml_str(
        "[service]\nslice_ns = 5000\n[fabric.qubit]\nreadout_sigma = 0.0\n",
    )
    .unwrap();
    assert_eq!(
        (
            cfg.fabric.seed,
            cfg.service.slice_ns,
            cfg.fabric.qubit.readout_sigma
        ),
        (0, 5000, 0.0)
    );
    let cfg = ServiceConfig::from_toml_str("[fabric]\nseed = 9\n[engine]\nerror_queue_len = 4\n")
        .unwrap();
    assert_eq!((cfg.fabric.seed, cfg.engine.error_queue_len), (9, 4));
    assert!(ServiceConfig::from_toml_str("[fabric]\nbogus = 1\n").is_err());
    assert!(ServiceConfig::from_toml_str("[engine]\nerror_queue_len = 0\n").is_err());
    assert!(ServiceConfig::from_toml_str("[whatever]\n").is_err());
}
