//! Contiguous and strided store streams through the write-combine buffer.

use iocc::cache::wc_write_stream;

fn main() {
    let chunk = 16;
    let contiguous: Vec<(u64, u64)> = (0..256).map(|i| (i * 4, 4)).collect();
    let strided: Vec<(u64, u64)> = (0..256).map(|i| ((i % 2) * 4096 + (i / 2) * 4, 4)).collect();
    for (name, stream) in [("contiguous", &contiguous), ("alternating", &strided)] {
        let s = wc_write_stream(stream.iter().copied(), chunk);
        println!(
            "{name:>11}: {} stores -> {} bus requests carrying {} bytes",
            stream.len(),
            s.emitted_requests,
            s.emitted_bytes
        );
    }
}
