//! Write-combine buffer for non-cacheable stores, and the read allocate
//! mode (cache bypass) classifier for cacheable write streams.

/// Single write-combine buffer covering one aligned chunk.
///
/// Stores that land in the buffered chunk merge into it. A store to a
/// different chunk, or one that overlaps bytes already buffered, drains
/// the buffer as one memory write request. A full chunk drains at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WcBuffer {
    chunk_bytes: u64,
    chunk_addr: Option<u64>,
    fill_mask: u128,
    emitted_requests: u64,
    emitted_bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WcSummary {
    pub emitted_requests: u64,
    pub emitted_bytes: u64,
}

impl WcBuffer {
    /// `chunk_bytes` must be a power of two no larger than 128.
    pub fn new(chunk_bytes: u64) -> Self {
        assert!(
            chunk_bytes.is_power_of_two() && chunk_bytes <= 128,
            "unsupported write-combine chunk of {chunk_bytes} bytes"
        );
        Self {
            chunk_bytes,
            chunk_addr: None,
            fill_mask: 0,
            emitted_requests: 0,
            emitted_bytes: 0,
        }
    }

    pub fn chunk_addr(&self) -> Option<u64> {
        self.chunk_addr
    }

    pub fn fill_mask(&self) -> u128 {
        self.fill_mask
    }

    fn full_mask(&self) -> u128 {
        if self.chunk_bytes == 128 {
            u128::MAX
        } else {
            (1u128 << self.chunk_bytes) - 1
        }
    }

    /// Drains the buffered chunk, if any, as one request.
    pub fn drain(&mut self) {
        if self.fill_mask != 0 {
            self.emitted_requests += 1;
            self.emitted_bytes += u64::from(self.fill_mask.count_ones());
        }
        self.fill_mask = 0;
        self.chunk_addr = None;
    }

    /// Buffers a store. Stores straddling a chunk boundary are split.
    pub fn write(&mut self, addr: u64, size: u64) {
        let mut addr = addr;
        let mut left = size;
        while left > 0 {
            let chunk = addr - addr % self.chunk_bytes;
            let offset = addr - chunk;
            let piece = left.min(self.chunk_bytes - offset);
            let bits = if piece == 128 {
                u128::MAX
            } else {
                ((1u128 << piece) - 1) << offset
            };
            if self.chunk_addr != Some(chunk) || self.fill_mask & bits != 0 {
                self.drain();
            }
            self.chunk_addr = Some(chunk);
            self.fill_mask |= bits;
            if self.fill_mask == self.full_mask() {
                self.drain();
            }
            addr += piece;
            left -= piece;
        }
    }

    pub fn summary(&self) -> WcSummary {
        WcSummary {
            emitted_requests: self.emitted_requests,
            emitted_bytes: self.emitted_bytes,
        }
    }

    pub fn finish(mut self) -> WcSummary {
        self.drain();
        self.summary()
    }
}

/// Runs a store stream through a fresh buffer and drains it at the end.
pub fn wc_write_stream(writes: impl IntoIterator<Item = (u64, u64)>, chunk_bytes: u64) -> WcSummary {
    let mut buf = WcBuffer::new(chunk_bytes);
    for (addr, size) in writes {
        buf.write(addr, size);
    }
    buf.finish()
}

/// Shape of a cacheable write stream, as seen by the L2 allocation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSummary {
    /// Longest run of address-contiguous stores.
    pub sequential_run_bytes: u64,
    pub total_bytes: u64,
    /// No loads interleaved with the stores.
    pub write_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationDecision {
    AllocateLines,
    /// Read allocate mode: stores go to DRAM without allocating lines.
    BypassToMemory,
}

pub fn classify_write_stream(stream: &StreamSummary, bypass_threshold_bytes: u64) -> AllocationDecision {
    debug_assert!(stream.sequential_run_bytes <= stream.total_bytes);
    let run = stream.sequential_run_bytes.min(stream.total_bytes);
    if stream.write_only && run >= bypass_threshold_bytes {
        AllocationDecision::BypassToMemory
    } else {
        AllocationDecision::AllocateLines
    }
}

/// Summarizes a concrete store stream.
pub fn summarize_stream(writes: &[(u64, u64)], write_only: bool) -> StreamSummary {
    let mut best = 0;
    let mut run = 0;
    let mut next: Option<u64> = None;
    let mut total = 0;
    for &(addr, size) in writes {
        total += size;
        run = if next == Some(addr) { run + size } else { size };
        best = best.max(run);
        next = Some(addr + size);
    }
    StreamSummary {
        sequential_run_bytes: best,
        total_bytes: total,
        write_only,
    }
}
