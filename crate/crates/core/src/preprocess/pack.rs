//! Window-pack files: `"FWIN"`, version u32, count u64, then per window
//! subject id (u32 length + UTF-8), location u8, label u8, start f64 and
//! 128 × 9 f32, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::canonical::N_CHANNELS;
use super::window::{Window, WindowLabel, WINDOW_LEN};
use crate::error::{Error, Result};

pub const PACK_MAGIC: &[u8; 4] = b"FWIN";
pub const PACK_VERSION: u32 = 1;
const VALUES: usize = WINDOW_LEN * N_CHANNELS;

fn label_byte(l: WindowLabel) -> Result<u8> {
    match l {
        WindowLabel::NonFog => Ok(0),
        WindowLabel::Fog => Ok(1),
        WindowLabel::Activity(id) if id < 0x80 => Ok(0x80 | id),
        WindowLabel::Activity(id) => Err(Error::Range(format!("activity id {id} does not fit the pack label byte"))),
    }
}

fn label_from_byte(b: u8) -> Result<WindowLabel> {
    match b {
        0 => Ok(WindowLabel::NonFog),
        1 => Ok(WindowLabel::Fog),
        b if b & 0x80 != 0 => Ok(WindowLabel::Activity(b & 0x7f)),
        b => Err(Error::Load(format!("unknown label byte {b:#04x}"))),
    }
}

pub fn write_windows<W: Write>(mut w: W, windows: &[Window]) -> Result<()> {
    w.write_all(PACK_MAGIC)?;
    w.write_all(&PACK_VERSION.to_le_bytes())?;
    w.write_all(&(windows.len() as u64).to_le_bytes())?;
    for win in windows {
        if win.values.len() != VALUES {
            return Err(Error::Shape(format!("window has {} values, expected {VALUES}", win.values.len())));
        }
        let id = win.subject_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&[win.location_id, label_byte(win.label)?])?;
        w.write_all(&win.start_time_s.to_le_bytes())?;
        let mut buf = Vec::with_capacity(VALUES * 4);
        for v in &win.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Load(format!("window pack truncated reading {what}: {e}")))
}

pub fn read_windows<R: Read>(mut r: R) -> Result<Vec<Window>> {
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    read_exact(&mut r, &mut b4, "magic")?;
    if &b4 != PACK_MAGIC {
        return Err(Error::Load(format!("bad window-pack magic {b4:?}")));
    }
    read_exact(&mut r, &mut b4, "version")?;
    let version = u32::from_le_bytes(b4);
    if version != PACK_VERSION {
        return Err(Error::Load(format!("unsupported window-pack version {version}")));
    }
    read_exact(&mut r, &mut b8, "count")?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    let mut payload = vec![0u8; VALUES * 4];
    for _ in 0..count {
        read_exact(&mut r, &mut b4, "subject length")?;
        let mut id = vec![0u8; u32::from_le_bytes(b4) as usize];
        read_exact(&mut r, &mut id, "subject id")?;
        let subject_id = String::from_utf8(id).map_err(|e| Error::Load(format!("subject id: {e}")))?;
        let mut meta = [0u8; 2];
        read_exact(&mut r, &mut meta, "location/label")?;
        if meta[0] > 5 {
            return Err(Error::Load(format!("location id {} not in [0, 5]", meta[0])));
        }
        read_exact(&mut r, &mut b8, "start time")?;
        read_exact(&mut r, &mut payload, "values")?;
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(Window {
            present_mask: Window::infer_present_mask(&values),
            values,
            label: label_from_byte(meta[1])?,
            location_id: meta[0],
            subject_id,
            start_time_s: f64::from_le_bytes(b8),
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Load("trailing bytes after last window".into()));
    }
    Ok(out)
}

pub fn save_window_pack(path: impl AsRef<Path>, windows: &[Window]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_windows(BufWriter::new(f), windows)
}

pub fn load_window_pack(path: impl AsRef<Path>) -> Result<Vec<Window>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_windows(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win(label: WindowLabel, loc: u8) -> Window {
        let mut values = vec![0f32; VALUES];
        for (i, v) in values.iter_mut().enumerate() {
            if i % N_CHANNELS < 6 {
                *v = (i as f32).sin();
            }
        }
        Window {
            present_mask: Window::infer_present_mask(&values),
            values,
            label,
            location_id: loc,
            subject_id: "S07".into(),
            start_time_s: 12.5,
        }
    }

    #[test]
    fn round_trip() {
        let ws = vec![win(WindowLabel::Fog, 0), win(WindowLabel::Activity(4), 1), win(WindowLabel::NonFog, 5)];
        let mut buf = Vec::new();
        write_windows(&mut buf, &ws).unwrap();
        assert_eq!(&buf[..4], b"FWIN");
        let back = read_windows(&buf[..]).unwrap();
        assert_eq!(back, ws);
        assert_eq!(back[0].present_mask, [true, true, true, true, true, true, false, false, false]);
    }

    #[test]
    fn truncation_is_a_load_error() {
        let mut buf = Vec::new();
        write_windows(&mut buf, &[win(WindowLabel::Fog, 0)]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_windows(&buf[..]), Err(Error::Load(_))));
    }
}
