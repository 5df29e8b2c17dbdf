//! Frame and sequence containers, Y4M input/output, synthetic sources.
//!
//! Everything downstream works on 8-bit luma only. Frames are padded to
//! multiples of 16 by edge replication at load time; the pre-padding
//! dimensions are kept for PSNR and byte-exact output.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Coding block edge length in samples.
pub const BLOCK: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    /// Padded width, a multiple of 16.
    pub width: usize,
    /// Padded height, a multiple of 16.
    pub height: usize,
    /// Width before padding.
    pub orig_width: usize,
    /// Height before padding.
    pub orig_height: usize,
    /// Row-major luma at the padded dimensions.
    pub luma: Vec<u8>,
}

impl Frame {
    /// Builds a frame from unpadded samples, replicating the last row
    /// and column out to the next multiple of 16.
    pub fn from_unpadded(width: usize, height: usize, samples: &[u8]) -> Result<Frame> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "frame dimensions {width}x{height} must be positive"
            )));
        }
        if samples.len() != width * height {
            return Err(Error::DimensionMismatch(samples.len(), width * height));
        }
        let pw = width.div_ceil(BLOCK) * BLOCK;
        let ph = height.div_ceil(BLOCK) * BLOCK;
        let mut luma = vec![0u8; pw * ph];
        for y in 0..ph {
            let sy = y.min(height - 1);
            for x in 0..pw {
                let sx = x.min(width - 1);
                luma[y * pw + x] = samples[sy * width + sx];
            }
        }
        Ok(Frame {
            width: pw,
            height: ph,
            orig_width: width,
            orig_height: height,
            luma,
        })
    }

    /// Zero frame with the same geometry as `other`.
    pub fn blank_like(other: &Frame) -> Frame {
        Frame {
            width: other.width,
            height: other.height,
            orig_width: other.orig_width,
            orig_height: other.orig_height,
            luma: vec![0u8; other.width * other.height],
        }
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.luma[y * self.width + x]
    }

    /// Number of 16x16 blocks per row.
    pub fn blocks_w(&self) -> usize {
        self.width / BLOCK
    }

    /// Number of 16x16 block rows.
    pub fn blocks_h(&self) -> usize {
        self.height / BLOCK
    }

    /// Copies the 16x16 block whose top-left corner is (x, y).
    pub fn block(&self, x: usize, y: usize) -> [u8; BLOCK * BLOCK] {
        debug_assert!(x + BLOCK <= self.width && y + BLOCK <= self.height);
        let mut out = [0u8; BLOCK * BLOCK];
        for row in 0..BLOCK {
            let src = (y + row) * self.width + x;
            out[row * BLOCK..(row + 1) * BLOCK].copy_from_slice(&self.luma[src..src + BLOCK]);
        }
        out
    }

    /// Writes a 16x16 block at (x, y).
    pub fn set_block(&mut self, x: usize, y: usize, block: &[u8; BLOCK * BLOCK]) {
        debug_assert!(x + BLOCK <= self.width && y + BLOCK <= self.height);
        for row in 0..BLOCK {
            let dst = (y + row) * self.width + x;
            self.luma[dst..dst + BLOCK].copy_from_slice(&block[row * BLOCK..(row + 1) * BLOCK]);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    /// Frames per second, used only for bitrate reporting.
    pub frame_rate: f64,
}

impl Sequence {
    /// Clone of the first `n` frames.
    pub fn prefix(&self, n: usize) -> Sequence {
        Sequence {
            frames: self.frames[..n.min(self.frames.len())].to_vec(),
            frame_rate: self.frame_rate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Textured base repeated unchanged.
    Static,
    /// Base translated by (dx, dy) per frame, clamped at the edges.
    Shift { dx: i32, dy: i32 },
    /// Shift plus per-pixel uniform noise in [-amplitude, amplitude].
    NoisyShift { dx: i32, dy: i32, amplitude: u8 },
    /// Static background with a half-frame inverted-texture patch
    /// sliding at (dx, dy) per frame, wrapping around the edges, plus
    /// the same per-pixel noise. Background blocks stay referenced for
    /// a whole group while covered ones keep being revealed, so the
    /// temporal dependency varies across the frame.
    Scene { dx: i32, dy: i32, amplitude: u8 },
}

/// Two crossed spatial sinusoids quantized to 8 bits; enough texture
/// that motion search is well posed everywhere.
fn textured_base(width: usize, height: usize) -> Vec<u8> {
    let mut base = vec![0u8; width * height];
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64, y as f64);
            let v = 128.0
                + 46.0 * (0.37 * xf + 0.19 * yf + 0.6).sin()
                + 38.0 * (0.11 * xf - 0.23 * yf + 2.2).sin();
            base[y * width + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    base
}

/// Deterministic synthetic source. The same arguments always produce
/// the same sequence, on any platform.
pub fn synth_sequence(
    kind: SynthKind,
    width: usize,
    height: usize,
    frame_count: usize,
    seed: u64,
) -> Result<Sequence> {
    if width == 0 || height == 0 {
        return Err(Error::Config(format!(
            "synthetic dimensions {width}x{height} must be positive"
        )));
    }
    if frame_count == 0 {
        return Err(Error::Config("synthetic sequence needs at least one frame".into()));
    }
    let base = textured_base(width, height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(frame_count);
    for n in 0..frame_count {
        let mut samples = vec![0u8; width * height];
        match kind {
            SynthKind::Static
            | SynthKind::Shift { .. }
            | SynthKind::NoisyShift { .. } => {
                let (dx, dy) = match kind {
                    SynthKind::Shift { dx, dy } | SynthKind::NoisyShift { dx, dy, .. } => (dx, dy),
                    _ => (0, 0),
                };
                for y in 0..height {
                    let sy =
                        (y as i64 - n as i64 * dy as i64).clamp(0, height as i64 - 1) as usize;
                    for x in 0..width {
                        let sx =
                            (x as i64 - n as i64 * dx as i64).clamp(0, width as i64 - 1) as usize;
                        samples[y * width + x] = base[sy * width + sx];
                    }
                }
            }
            SynthKind::Scene { dx, dy, .. } => {
                samples.copy_from_slice(&base);
                let (pw, ph) = (width / 2, height / 2);
                let px = (width as i64 / 4 + n as i64 * dx as i64).rem_euclid(width as i64);
                let py = (height as i64 / 4 + n as i64 * dy as i64).rem_euclid(height as i64);
                for v in 0..ph {
                    let yy = (py as usize + v) % height;
                    for u in 0..pw {
                        let xx = (px as usize + u) % width;
                        samples[yy * width + xx] = 255 - base[v * width + u];
                    }
                }
            }
        }
        let amplitude = match kind {
            SynthKind::NoisyShift { amplitude, .. } | SynthKind::Scene { amplitude, .. } => {
                amplitude
            }
            _ => 0,
        };
        if amplitude > 0 {
            for s in samples.iter_mut() {
                let v = *s as i32 + rng.gen_range(-(amplitude as i32)..=amplitude as i32);
                *s = v.clamp(0, 255) as u8;
            }
        }
        frames.push(Frame::from_unpadded(width, height, &samples)?);
    }
    Ok(Sequence { frames, frame_rate: 30.0 })
}

fn header_token_usize(tok: &str) -> Result<usize> {
    tok[1..]
        .parse::<usize>()
        .ok()
        .filter(|v| *v > 0)
        .ok_or_else(|| Error::Y4mHeader(tok.to_string()))
}

/// Parses a Y4M stream: 8-bit 4:2:0 or 4:0:0, luma kept, chroma
/// skipped. Frames are edge-padded to multiples of 16.
pub fn parse_y4m<R: BufRead>(mut input: R) -> Result<Sequence> {
    let mut header = Vec::new();
    input.read_until(b'\n', &mut header)?;
    if header.last() == Some(&b'\n') {
        header.pop();
    }
    let header = String::from_utf8_lossy(&header).into_owned();
    let mut tokens = header.split_ascii_whitespace();
    match tokens.next() {
        Some("YUV4MPEG2") => {}
        other => return Err(Error::Y4mHeader(other.unwrap_or("").to_string())),
    }
    let mut width = None;
    let mut height = None;
    let mut frame_rate = 30.0;
    let mut chroma_420 = true;
    for tok in tokens {
        match tok.as_bytes().first() {
            Some(b'W') => width = Some(header_token_usize(tok)?),
            Some(b'H') => height = Some(header_token_usize(tok)?),
            Some(b'F') => {
                let body = &tok[1..];
                let (num, den) = body
                    .split_once(':')
                    .and_then(|(n, d)| Some((n.parse::<u64>().ok()?, d.parse::<u64>().ok()?)))
                    .filter(|(n, d)| *n > 0 && *d > 0)
                    .ok_or_else(|| Error::Y4mHeader(tok.to_string()))?;
                frame_rate = num as f64 / den as f64;
            }
            Some(b'C') => match &tok[1..] {
                "420" | "420jpeg" | "420mpeg2" | "420paldv" => chroma_420 = true,
                "mono" => chroma_420 = false,
                _ => return Err(Error::Y4mHeader(tok.to_string())),
            },
            // Interlacing, aspect, and extension tokens carry nothing we
            // use; anything else is rejected by name.
            Some(b'I') | Some(b'A') | Some(b'X') => {}
            _ => return Err(Error::Y4mHeader(tok.to_string())),
        }
    }
    let width = width.ok_or_else(|| Error::Y4mHeader("W".into()))?;
    let height = height.ok_or_else(|| Error::Y4mHeader("H".into()))?;
    let chroma_len = if chroma_420 {
        2 * (width.div_ceil(2) * height.div_ceil(2))
    } else {
        0
    };

    let mut frames = Vec::new();
    loop {
        let mut line = Vec::new();
        let n = input.read_until(b'\n', &mut line)?;
        if n == 0 {
            break;
        }
        if line.last() == Some(&b'\n') {
            line.pop();
        }
        let line = String::from_utf8_lossy(&line).into_owned();
        let marker = line.split_ascii_whitespace().next().unwrap_or("");
        if marker != "FRAME" {
            return Err(Error::Y4mHeader(marker.to_string()));
        }
        let index = frames.len();
        let mut luma = vec![0u8; width * height];
        input
            .read_exact(&mut luma)
            .map_err(|_| Error::Y4mTruncated(index))?;
        if chroma_len > 0 {
            let mut chroma = vec![0u8; chroma_len];
            input
                .read_exact(&mut chroma)
                .map_err(|_| Error::Y4mTruncated(index))?;
        }
        frames.push(Frame::from_unpadded(width, height, &luma)?);
    }
    if frames.is_empty() {
        return Err(Error::Config("y4m stream contains no frames".into()));
    }
    Ok(Sequence { frames, frame_rate })
}

/// Writes the sequence as Y4M 4:2:0 with neutral chroma, cropping each
/// frame back to its pre-padding dimensions.
pub fn write_y4m<W: Write>(seq: &Sequence, mut out: W) -> Result<()> {
    let first = &seq.frames[0];
    let (w, h) = (first.orig_width, first.orig_height);
    let (num, den) = if seq.frame_rate.fract() == 0.0 {
        (seq.frame_rate as u64, 1)
    } else {
        ((seq.frame_rate * 1000.0).round() as u64, 1000)
    };
    writeln!(out, "YUV4MPEG2 W{w} H{h} F{num}:{den} Ip A1:1 C420")?;
    let chroma = vec![128u8; w.div_ceil(2) * h.div_ceil(2)];
    for frame in &seq.frames {
        writeln!(out, "FRAME")?;
        for y in 0..h {
            out.write_all(&frame.luma[y * frame.width..y * frame.width + w])?;
        }
        out.write_all(&chroma)?;
        out.write_all(&chroma)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn y4m_bytes(width: usize, height: usize, frames: usize) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(format!("YUV4MPEG2 W{width} H{height} F30:1 C420\n").as_bytes());
        for n in 0..frames {
            buf.extend_from_slice(b"FRAME\n");
            buf.extend((0..width * height).map(|i| ((i + n * 7) % 256) as u8));
            buf.extend(std::iter::repeat(128u8).take(2 * (width / 2) * (height / 2)));
        }
        buf
    }

    #[test]
    fn parses_well_formed_y4m() {
        let seq = parse_y4m(Cursor::new(y4m_bytes(64, 48, 2))).unwrap();
        assert_eq!(seq.frames.len(), 2);
        assert_eq!(seq.frame_rate, 30.0);
        let f = &seq.frames[0];
        assert_eq!((f.width, f.height), (64, 48));
        assert_eq!((f.orig_width, f.orig_height), (64, 48));
        assert_eq!(f.luma[5], 5);
    }

    #[test]
    fn pads_to_multiples_of_16_by_edge_replication() {
        let samples: Vec<u8> = (0..17u32 * 16).map(|i| (i % 251) as u8).collect();
        let f = Frame::from_unpadded(17, 16, &samples).unwrap();
        assert_eq!((f.width, f.height), (32, 16));
        assert_eq!((f.orig_width, f.orig_height), (17, 16));
        for y in 0..16 {
            let last = samples[y * 17 + 16];
            for x in 17..32 {
                assert_eq!(f.sample(x, y), last, "col {x} row {y}");
            }
            for x in 0..17 {
                assert_eq!(f.sample(x, y), samples[y * 17 + x]);
            }
        }
    }

    #[test]
    fn rejects_malformed_header_naming_token() {
        let err = parse_y4m(Cursor::new(b"YUV4MPEG2 W1x H16 F30:1\n".to_vec())).unwrap_err();
        assert!(matches!(&err, Error::Y4mHeader(t) if t == "W1x"), "{err}");

        let err = parse_y4m(Cursor::new(b"JUNK W16 H16\n".to_vec())).unwrap_err();
        assert!(matches!(&err, Error::Y4mHeader(t) if t == "JUNK"));

        let err = parse_y4m(Cursor::new(b"YUV4MPEG2 W16 H16 F30:1 C444\n".to_vec())).unwrap_err();
        assert!(matches!(&err, Error::Y4mHeader(t) if t == "C444"));
    }

    #[test]
    fn truncated_payload_names_frame_index() {
        let mut bytes = y4m_bytes(32, 32, 3);
        bytes.truncate(bytes.len() - 40);
        let err = parse_y4m(Cursor::new(bytes)).unwrap_err();
        assert!(matches!(err, Error::Y4mTruncated(2)), "{err}");
    }

    #[test]
    fn y4m_roundtrip_is_identity() {
        let seq = synth_sequence(SynthKind::NoisyShift { dx: 1, dy: 1, amplitude: 5 }, 70, 50, 3, 9)
            .unwrap();
        let mut buf = Vec::new();
        write_y4m(&seq, &mut buf).unwrap();
        let back = parse_y4m(Cursor::new(buf)).unwrap();
        assert_eq!(seq, back);
    }

    #[test]
    fn static_synth_repeats_base() {
        let seq = synth_sequence(SynthKind::Static, 48, 32, 4, 1).unwrap();
        for f in &seq.frames[1..] {
            assert_eq!(f, &seq.frames[0]);
        }
    }

    #[test]
    fn shift_synth_translates_interior() {
        let seq = synth_sequence(SynthKind::Shift { dx: 2, dy: 0 }, 64, 32, 3, 1).unwrap();
        let (f1, f2) = (&seq.frames[1], &seq.frames[2]);
        for y in 0..32 {
            for x in 4..64 {
                assert_eq!(f2.sample(x, y), f1.sample(x - 2, y), "({x},{y})");
            }
        }
    }

    #[test]
    fn synth_is_seed_deterministic() {
        let kind = SynthKind::NoisyShift { dx: 1, dy: 0, amplitude: 8 };
        let a = synth_sequence(kind, 64, 64, 3, 42).unwrap();
        let b = synth_sequence(kind, 64, 64, 3, 42).unwrap();
        let c = synth_sequence(kind, 64, 64, 3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn scene_synth_moves_patch_over_fixed_background() {
        let seq = synth_sequence(SynthKind::Scene { dx: 4, dy: 0, amplitude: 0 }, 64, 64, 3, 0)
            .unwrap();
        let base = textured_base(64, 64);
        // Patch starts at (16, 16) and covers 32x32 with inverted texels.
        assert_eq!(seq.frames[0].sample(16, 16), 255 - base[0]);
        assert_eq!(seq.frames[1].sample(20, 16), 255 - base[0]);
        // A corner the patch never reaches in these frames stays put.
        for f in &seq.frames {
            assert_eq!(f.sample(0, 0), base[0]);
            assert_eq!(f.sample(63, 0), base[63]);
        }
        // The trailing edge is re-exposed background, not patch.
        assert_eq!(seq.frames[1].sample(16, 16), base[16 * 64 + 16]);
    }

    #[test]
    fn synth_rejects_degenerate_shapes() {
        assert!(synth_sequence(SynthKind::Static, 0, 16, 1, 0).is_err());
        assert!(synth_sequence(SynthKind::Static, 16, 16, 0, 0).is_err());
    }
}
