//! The compiled pipeline (with and without optimisation) against the
//! tree-walking reference interpreter, over the program corpus and the
//! bundled tasks.

mod common;

use std::fs;
use std::path::PathBuf;

use common::{run_reference, run_vm, Event};
use proptest::prelude::*;
use qtask_core::tasks;

const PARAMS: [u32; 4] = [7, 3, 0xFFFF_FFF9, 1000];

fn corpus() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let mut files: Vec<_> = fs::read_dir(&dir)
        .expect("corpus directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "c"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect()
}

fn check_equivalent(name: &str, src: &str, params: &[u32]) -> common::Outcome {
    let reference = run_reference(src, params);
    let plain = run_vm(src, false, params);
    let optimized = run_vm(src, true, params);
    assert_eq!(
        plain, reference,
        "{name}: unoptimised VM differs from the reference"
    );
    assert_eq!(
        optimized, reference,
        "{name}: optimised VM differs from the reference"
    );
    reference
}

#[test]
fn corpus_matches_reference() {
    let programs = corpus();
    assert!(
        programs.len() >= 30,
        "corpus has only {} programs",
        programs.len()
    );
    let mut traps = 0;
    for (name, src) in &programs {
        let out = check_equivalent(name, src, &PARAMS);
        assert!(
            !out.events.is_empty() || !out.boxes.is_empty() || out.exit.starts_with("trapped"),
            "{name} has no observable effect"
        );
        if name.contains("trap") {
            assert!(out.exit.starts_with("trapped"), "{name}: {}", out.exit);
            traps += 1;
        }
    }
    assert!(traps >= 5);
}

#[test]
fn corpus_spot_values() {
    let get = |n: &str| {
        let (_, src) = corpus()
            .into_iter()
            .find(|(f, _)| f.starts_with(n))
            .unwrap();
        run_reference(&src, &PARAMS)
    };
    let console = |o: &common::Outcome| -> String {
        o.events
            .iter()
            .filter_map(|e| match e {
                Event::Console(s) => Some(s.as_str()),
                _ => None,
            })
            .collect()
    };

    let o = get("01_");
    assert_eq!(console(&o), "12 22 -85 -3 2\n-4 -1\n");
    assert_eq!(o.exit, "returned 56");
    assert_eq!(get("09_").exit, "returned 55");
    assert_eq!(console(&get("09_")), "fib=610 fact=479001600\n");
    assert_eq!(get("10_").exit, "returned 9");
    assert_eq!(get("13_").exit, "returned 46");
    assert_eq!(console(&get("15_")), format!("crc={:08x}\n", crc32_ref()));
    assert_eq!(get("37_").exit, "trapped divide-by-zero");
    assert_eq!(get("40_").exit, "trapped stack-overflow");
    assert_eq!(get("41_").exit, "trapped unbalanced-critical");
    assert_eq!(get("42_").exit, "trapped out-of-bounds");
}

/// CRC-32 of "abcdefghijklmnop", computed bitwise.
fn crc32_ref() -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in b"abcdefghijklmnop" {
        crc ^= u32::from(b);
        for _ in 0..8 {
            crc = if crc & 1 == 1 {
                (crc >> 1) ^ 0xEDB8_8320
            } else {
                crc >> 1
            };
        }
    }
    !crc
}

#[test]
fn bundled_tasks_match_reference() {
    let cases: Vec<(&str, String, Vec<u32>)> = vec![
        ("empty", tasks::EMPTY.into(), vec![]),
        ("basic", tasks::BASIC.into(), vec![5, 0]),
        ("basic-bad-params", tasks::BASIC.into(), vec![5]),
        ("histogram", tasks::HISTOGRAM.into(), vec![10, 3, 10_000, 4]),
        ("g2-fft", tasks::G2.into(), vec![2, 8, 1000, 0, 8]),
        ("g2-direct", tasks::G2.into(), vec![2, 8, 1000, 1, 5]),
        (
            "sweep-sa",
            tasks::sweep_source(tasks::SweepMode::SweepThenAverage),
            vec![4, 3, 1000, 5, 0, 100],
        ),
        (
            "sweep-as",
            tasks::sweep_source(tasks::SweepMode::AverageThenSweep),
            vec![4, 3, 1000, 5, 0, 100],
        ),
        ("bench-read", tasks::BENCH.into(), vec![0, 3]),
        ("bench-memcpy", tasks::BENCH.into(), vec![2, 2]),
        ("bench-multiply", tasks::BENCH.into(), vec![3, 2]),
        ("bench-bad-op", tasks::BENCH.into(), vec![9, 2]),
    ];
    for (name, src, params) in cases {
        check_equivalent(name, &src, &params);
    }
}

#[test]
fn basic_task_reports_wrong_parameter_count() {
    let out = run_reference(tasks::BASIC, &[1, 2, 3]);
    assert_eq!(out.exit, "returned -1");
    assert_eq!(
        out.events,
        vec![Event::Error(
            "Please provide exactly 2 parameters (got 3)".into()
        )]
    );
}

fn expr_strategy() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("a".to_string()),
        Just("b".to_string()),
        Just("c".to_string()),
        Just("(int)u".to_string()),
        (-40i32..40).prop_map(|v| format!("({v})")),
        (0u32..40).prop_map(|v| format!("(int){v}u")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let ops = prop::sample::select(vec![
            "+", "-", "*", "/", "%", "&", "|", "^", "<<", ">>", "==", "!=", "<", "<=", ">", ">=",
            "&&", "||",
        ]);
        prop_oneof![
            (inner.clone(), ops, inner.clone()).prop_map(|(a, op, b)| format!("({a} {op} {b})")),
            inner.clone().prop_map(|a| format!("(-{a})")),
            inner.clone().prop_map(|a| format!("(~{a})")),
            inner.clone().prop_map(|a| format!("(!{a})")),
            inner
                .clone()
                .prop_map(|a| format!("(int)((uint32_t){a} >> 3u)")),
            (inner.clone(), inner.clone(), inner)
                .prop_map(|(c, a, b)| format!("({c} ? {a} : {b})")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(192))]

    #[test]
    fn random_integer_expressions_match_reference(e in expr_strategy(), p in prop::array::uniform4(any::<u32>())) {
        let src = format!(
            "int task_entry()\n{{\n    uint32_t *p = rtos_GetParameters();\n    int a = (int)p[0];\n    int b = (int)p[1] % 64;\n    uint32_t u = p[2];\n    int c = (int)p[3];\n    int r = {e};\n    rtos_printf(\"%d\\n\", r);\n    return r;\n}}\n"
        );
        let reference = run_reference(&src, &p);
        prop_assert_eq!(&run_vm(&src, false, &p), &reference, "{}", src);
        prop_assert_eq!(&run_vm(&src, true, &p), &reference, "{}", src);
    }
}
