//! 16-bit PCM mono RIFF/WAVE writer.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use base64::Engine;
use thiserror::Error;

use super::{AudioFrame, SAMPLE_RATE_HZ};

pub const BITS_PER_SAMPLE: u16 = 16;
const CHANNELS: u16 = 1;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("frames mix sample rates {0} Hz and {1} Hz")]
    MixedSampleRates(u32, u32),
    #[error("audio too long for a RIFF file")]
    TooLong,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn quantize(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16
}

/// Little-endian 16-bit PCM, base64-encoded for the wire.
pub fn encode_pcm16(frame: &AudioFrame) -> String {
    let bytes: Vec<u8> = frame
        .samples
        .iter()
        .flat_map(|s| quantize(*s).to_le_bytes())
        .collect();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn write_wav_to<W: Write>(frames: &[AudioFrame], mut out: W) -> Result<(), WavError> {
    let rate = frames.first().map_or(SAMPLE_RATE_HZ, |f| f.sample_rate_hz);
    if let Some(f) = frames.iter().find(|f| f.sample_rate_hz != rate) {
        return Err(WavError::MixedSampleRates(rate, f.sample_rate_hz));
    }
    let n: usize = frames.iter().map(|f| f.samples.len()).sum();
    let block_align = CHANNELS * BITS_PER_SAMPLE / 8;
    let data_len = u32::try_from(n * block_align as usize).map_err(|_| WavError::TooLong)?;
    let riff_len = data_len.checked_add(36).ok_or(WavError::TooLong)?;

    out.write_all(b"RIFF")?;
    out.write_all(&riff_len.to_le_bytes())?;
    out.write_all(b"WAVE")?;
    out.write_all(b"fmt ")?;
    out.write_all(&16u32.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?; // PCM
    out.write_all(&CHANNELS.to_le_bytes())?;
    out.write_all(&rate.to_le_bytes())?;
    out.write_all(&(rate * block_align as u32).to_le_bytes())?;
    out.write_all(&block_align.to_le_bytes())?;
    out.write_all(&BITS_PER_SAMPLE.to_le_bytes())?;
    out.write_all(b"data")?;
    out.write_all(&data_len.to_le_bytes())?;
    for s in frames.iter().flat_map(|f| &f.samples) {
        out.write_all(&quantize(*s).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_wav(frames: &[AudioFrame], path: impl AsRef<Path>) -> Result<(), WavError> {
    let file = File::create(path)?;
    write_wav_to(frames, BufWriter::new(file))
}
