//! Data-box arena. First-fit allocation over an offset-ordered free list;
//! freed extents are merged with their neighbours.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Extents are rounded up to this many bytes.
pub const EXTENT_ALIGN: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoxState {
    Open,
    Finished,
    Fetched,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataBox {
    pub id: u32,
    pub offset: u64,
    pub size: u64,
    pub state: BoxState,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeapError {
    #[error("box size must be positive")]
    ZeroSize,
    #[error("no free extent of {0} bytes")]
    OutOfArena(u64),
    #[error("no live box with id {0}")]
    NotFound(u32),
    #[error("box {id} is {state:?}")]
    InvalidBoxState { id: u32, state: BoxState },
    #[error("arena range {offset}+{len} out of bounds")]
    OutOfRange { offset: u64, len: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Live {
    offset: u64,
    size: u64,
    extent: u64,
    state: BoxState,
    finish_seq: u64,
}

#[derive(Debug, Clone)]
pub struct BoxHeap {
    capacity: u64,
    mem: Vec<u8>,
    /// offset -> length
    free: BTreeMap<u64, u64>,
    live: BTreeMap<u32, Live>,
    next_id: u32,
    finish_seq: u64,
}

fn round_up(n: u64) -> Option<u64> {
    n.checked_add(EXTENT_ALIGN - 1)
        .map(|v| v / EXTENT_ALIGN * EXTENT_ALIGN)
}

impl BoxHeap {
    pub fn new(capacity: u64) -> Self {
        let capacity = capacity / EXTENT_ALIGN * EXTENT_ALIGN;
        let mut free = BTreeMap::new();
        if capacity > 0 {
            free.insert(0, capacity);
        }
        Self {
            capacity,
            mem: vec![0; capacity as usize],
            free,
            live: BTreeMap::new(),
            next_id: 1,
            finish_seq: 0,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn free_bytes(&self) -> u64 {
        self.free.values().sum()
    }

    pub fn allocated_bytes(&self) -> u64 {
        self.live.values().map(|b| b.extent).sum()
    }

    pub fn free_extents(&self) -> Vec<(u64, u64)> {
        self.free.iter().map(|(&o, &l)| (o, l)).collect()
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    fn describe(id: u32, b: &Live) -> DataBox {
        DataBox {
            id,
            offset: b.offset,
            size: b.size,
            state: b.state,
        }
    }

    pub fn get(&self, id: u32) -> Option<DataBox> {
        self.live.get(&id).map(|b| Self::describe(id, b))
    }

    /// Allocates a zeroed OPEN box.
    pub fn alloc(&mut self, size: u64) -> Result<DataBox, HeapError> {
        if size == 0 {
            return Err(HeapError::ZeroSize);
        }
        let extent = round_up(size).ok_or(HeapError::OutOfArena(size))?;
        let (&offset, &len) = self
            .free
            .iter()
            .find(|(_, &len)| len >= extent)
            .ok_or(HeapError::OutOfArena(size))?;
        self.free.remove(&offset);
        if len > extent {
            self.free.insert(offset + extent, len - extent);
        }
        self.mem[offset as usize..(offset + size) as usize].fill(0);
        let id = self.next_id;
        self.next_id = self.next_id.wrapping_add(1).max(1);
        let b = Live {
            offset,
            size,
            extent,
            state: BoxState::Open,
            finish_seq: 0,
        };
        self.live.insert(id, b);
        Ok(Self::describe(id, &b))
    }

    fn release(&mut self, offset: u64, extent: u64) {
        let mut start = offset;
        let mut len = extent;
        if let Some((&po, &pl)) = self.free.range(..offset).next_back() {
            if po + pl == offset {
                self.free.remove(&po);
                start = po;
                len += pl;
            }
        }
        if let Some(&nl) = self.free.get(&(offset + extent)) {
            self.free.remove(&(offset + extent));
            len += nl;
        }
        self.free.insert(start, len);
    }

    fn expect_state(&self, id: u32, want: BoxState) -> Result<Live, HeapError> {
        let b = *self.live.get(&id).ok_or(HeapError::NotFound(id))?;
        if b.state != want {
            return Err(HeapError::InvalidBoxState { id, state: b.state });
        }
        Ok(b)
    }

    /// OPEN -> FINISHED.
    pub fn finish(&mut self, id: u32) -> Result<(), HeapError> {
        self.expect_state(id, BoxState::Open)?;
        self.finish_seq += 1;
        let b = self.live.get_mut(&id).expect("checked above");
        b.state = BoxState::Finished;
        b.finish_seq = self.finish_seq;
        Ok(())
    }

    /// OPEN -> DISCARDED; frees the extent.
    pub fn discard(&mut self, id: u32) -> Result<DataBox, HeapError> {
        let b = self.expect_state(id, BoxState::Open)?;
        self.live.remove(&id);
        self.release(b.offset, b.extent);
        Ok(DataBox {
            state: BoxState::Discarded,
            ..Self::describe(id, &b)
        })
    }

    /// FINISHED -> FETCHED; frees the extent.
    pub fn mark_fetched(&mut self, id: u32) -> Result<DataBox, HeapError> {
        let b = self.expect_state(id, BoxState::Finished)?;
        self.live.remove(&id);
        self.release(b.offset, b.extent);
        Ok(DataBox {
            state: BoxState::Fetched,
            ..Self::describe(id, &b)
        })
    }

    /// FINISHED boxes in the order they were finished.
    pub fn finished(&self) -> Vec<DataBox> {
        let mut v: Vec<_> = self
            .live
            .iter()
            .filter(|(_, b)| b.state == BoxState::Finished)
            .collect();
        v.sort_by_key(|(_, b)| b.finish_seq);
        v.into_iter()
            .map(|(&id, b)| Self::describe(id, b))
            .collect()
    }

    /// Discards every OPEN box. Returns how many were freed.
    pub fn discard_open(&mut self) -> usize {
        let open: Vec<u32> = self
            .live
            .iter()
            .filter(|(_, b)| b.state == BoxState::Open)
            .map(|(&id, _)| id)
            .collect();
        for &id in &open {
            let _ = self.discard(id);
        }
        open.len()
    }

    /// Frees every box.
    pub fn clear(&mut self) {
        self.live.clear();
        self.free.clear();
        if self.capacity > 0 {
            self.free.insert(0, self.capacity);
        }
    }

    /// Contents of a live box.
    pub fn bytes(&self, id: u32) -> Result<&[u8], HeapError> {
        let b = self.live.get(&id).ok_or(HeapError::NotFound(id))?;
        Ok(&self.mem[b.offset as usize..(b.offset + b.size) as usize])
    }

    pub fn bytes_mut(&mut self, id: u32) -> Result<&mut [u8], HeapError> {
        let b = self.live.get(&id).ok_or(HeapError::NotFound(id))?;
        Ok(&mut self.mem[b.offset as usize..(b.offset + b.size) as usize])
    }

    /// Raw arena access, as seen through shared memory.
    pub fn read_arena(&self, offset: u64, len: u64) -> Result<&[u8], HeapError> {
        match offset.checked_add(len) {
            Some(end) if end <= self.capacity => Ok(&self.mem[offset as usize..end as usize]),
            _ => Err(HeapError::OutOfRange { offset, len }),
        }
    }

    /// Checks conservation, non-overlap and coalescing.
    pub fn audit(&self) -> Result<(), String> {
        let mut extents: Vec<(u64, u64, bool)> =
            self.free.iter().map(|(&o, &l)| (o, l, true)).collect();
        extents.extend(self.live.values().map(|b| (b.offset, b.extent, false)));
        extents.sort_unstable();
        let mut cursor = 0;
        let mut prev_free = false;
        for (o, l, is_free) in extents {
            if o != cursor {
                return Err(format!("gap or overlap at {cursor} (next extent at {o})"));
            }
            if l == 0 {
                return Err(format!("empty extent at {o}"));
            }
            if is_free && prev_free {
                return Err(format!("adjacent free extents at {o}"));
            }
            prev_free = is_free;
            cursor = o + l;
        }
        if cursor != self.capacity {
            return Err(format!("extents cover {cursor} of {} bytes", self.capacity));
        }
        Ok(())
    }
}
