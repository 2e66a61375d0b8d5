use std::collections::BTreeMap;

use proptest::prelude::*;
use qtask_core::engine::heap::{BoxHeap, BoxState, EXTENT_ALIGN};

#[derive(Debug, Clone)]
enum Op {
    Alloc(u64),
    Finish(usize),
    Discard(usize),
    Fetch(usize),
    DiscardOpen,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (1u64..700).prop_map(Op::Alloc),
        2 => any::<usize>().prop_map(Op::Finish),
        1 => any::<usize>().prop_map(Op::Discard),
        2 => any::<usize>().prop_map(Op::Fetch),
        1 => Just(Op::DiscardOpen),
    ]
}

type Model = BTreeMap<u32, (BoxState, u64, u8)>;

fn of(model: &Model, s: BoxState) -> Vec<u32> {
    model
        .iter()
        .filter(|(_, v)| v.0 == s)
        .map(|(&k, _)| k)
        .collect()
}

fn pick(ids: &[u32], i: usize) -> Option<u32> {
    (!ids.is_empty()).then(|| ids[i % ids.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn allocator_conserves_bytes(ops in prop::collection::vec(op(), 1..200)) {
        let cap = 8192;
        let mut heap = BoxHeap::new(cap);
        // Model: id -> (state, size, fill byte)
        let mut model = Model::new();
        for op in ops {
            match op {
                Op::Alloc(size) => {
                    let free_before = heap.free_bytes();
                    match heap.alloc(size) {
                        Ok(b) => {
                            prop_assert_eq!(b.size, size);
                            prop_assert_eq!(b.offset % EXTENT_ALIGN, 0);
                            let fill = (b.id % 251) as u8;
                            let bytes = heap.bytes_mut(b.id).unwrap();
                            prop_assert!(bytes.iter().all(|&x| x == 0), "fresh box not zeroed");
                            bytes.fill(fill);
                            model.insert(b.id, (BoxState::Open, size, fill));
                        }
                        Err(_) => {
                            let need = size.div_ceil(EXTENT_ALIGN) * EXTENT_ALIGN;
                            prop_assert!(heap.free_extents().iter().all(|&(_, l)| l < need));
                            prop_assert_eq!(heap.free_bytes(), free_before);
                        }
                    }
                }
                Op::Finish(i) => {
                    if let Some(id) = pick(&of(&model, BoxState::Open), i) {
                        heap.finish(id).unwrap();
                        model.get_mut(&id).unwrap().0 = BoxState::Finished;
                    }
                    if let Some(id) = pick(&of(&model, BoxState::Finished), i) {
                        prop_assert!(heap.finish(id).is_err());
                    }
                }
                Op::Discard(i) => {
                    if let Some(id) = pick(&of(&model, BoxState::Open), i) {
                        heap.discard(id).unwrap();
                        model.remove(&id);
                        prop_assert!(heap.get(id).is_none());
                    }
                }
                Op::Fetch(i) => {
                    if let Some(id) = pick(&of(&model, BoxState::Finished), i) {
                        let (_, size, fill) = model[&id];
                        let b = heap.get(id).unwrap();
                        let arena = heap.read_arena(b.offset, size).unwrap();
                        prop_assert!(arena.iter().all(|&x| x == fill), "box {} corrupted", id);
                        heap.mark_fetched(id).unwrap();
                        model.remove(&id);
                        prop_assert!(heap.mark_fetched(id).is_err());
                    }
                }
                Op::DiscardOpen => {
                    let n = heap.discard_open();
                    prop_assert_eq!(n, of(&model, BoxState::Open).len());
                    model.retain(|_, v| v.0 != BoxState::Open);
                }
            }
            heap.audit().map_err(TestCaseError::fail)?;
            prop_assert_eq!(heap.free_bytes() + heap.allocated_bytes(), cap);
            prop_assert_eq!(heap.live_count(), model.len());
            let finished: Vec<u32> = heap.finished().iter().map(|b| b.id).collect();
            let mut expect = of(&model, BoxState::Finished);
            let mut sorted = finished.clone();
            sorted.sort_unstable();
            expect.sort_unstable();
            prop_assert_eq!(sorted, expect);
        }
        for id in model.keys().copied().collect::<Vec<_>>() {
            if model[&id].0 == BoxState::Open {
                heap.discard(id).unwrap();
            } else {
                heap.mark_fetched(id).unwrap();
            }
        }
        prop_assert_eq!(heap.free_extents(), vec![(0, cap)]);
    }
}
