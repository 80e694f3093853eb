//! On-disk dataset layout.
//!
//! A dataset directory holds `scenes.jsonl`, `frames.jsonl` and
//! `agents.jsonl`: one JSON object per line, fields in fixed order, numbers
//! as plain decimal text with 9 significant digits. An optional
//! `rasters.bin` caches rendered rasters:
//!
//! ```text
//! "BEVR" | version u32 = 1 | count u32 | channels u32 | height u32 | width u32
//! count·C·H·W × f32
//! ```
//!
//! All integers and floats are little-endian.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::data::{Agent, AgentLabel, Dataset, Frame, Scene};
use crate::error::FormatError;
use crate::geometry::Pose2;
use crate::tensor::Tensor;

pub const SCENES_FILE: &str = "scenes.jsonl";
pub const FRAMES_FILE: &str = "frames.jsonl";
pub const AGENTS_FILE: &str = "agents.jsonl";
pub const RASTERS_FILE: &str = "rasters.bin";

const RASTER_MAGIC: &[u8; 4] = b"BEVR";
const RASTER_VERSION: u32 = 1;

/// Plain decimal rendering with 9 significant digits, trailing zeros
/// trimmed; zero (of either sign) renders as `0`.
pub fn format_number(x: f64) -> String {
    assert!(x.is_finite(), "dataset numbers must be finite");
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if exp >= 8 {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', (exp - 8) as usize));
        return out;
    }
    if exp >= 0 {
        let split = exp as usize + 1;
        out.push_str(&digits[..split]);
        out.push('.');
        out.push_str(&digits[split..]);
    } else {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(&digits);
    }
    let trimmed = out.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn num_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| format_number(x)).collect();
    format!("[{}]", parts.join(","))
}

pub fn scenes_text(ds: &Dataset) -> String {
    let mut out = String::new();
    for s in &ds.scenes {
        let _ = writeln!(
            out,
            "{{\"scene_id\":{},\"host\":{},\"frame_start_index\":{},\"frame_end_index\":{}}}",
            s.scene_id,
            json_string(&s.host),
            s.frame_start_index,
            s.frame_end_index
        );
    }
    out
}

pub fn frames_text(ds: &Dataset) -> String {
    let mut out = String::new();
    for f in &ds.frames {
        let p = f.ego_pose;
        let _ = writeln!(
            out,
            "{{\"timestamp\":{},\"ego_pose\":{},\"agent_start_index\":{},\"agent_end_index\":{}}}",
            format_number(f.timestamp),
            num_list(&[p.x, p.y, p.yaw]),
            f.agent_start_index,
            f.agent_end_index
        );
    }
    out
}

pub fn agents_text(ds: &Dataset) -> String {
    let mut out = String::new();
    for a in &ds.agents {
        let _ = writeln!(
            out,
            "{{\"track_id\":{},\"centroid\":{},\"yaw\":{},\"extent\":{},\"velocity\":{},\"label\":\"{}\"}}",
            a.track_id,
            num_list(&a.centroid),
            format_number(a.yaw),
            num_list(&a.extent),
            num_list(&a.velocity),
            a.label.as_str()
        );
    }
    out
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<(), FormatError> {
    ds.validate()?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SCENES_FILE), scenes_text(ds))?;
    fs::write(dir.join(FRAMES_FILE), frames_text(ds))?;
    fs::write(dir.join(AGENTS_FILE), agents_text(ds))?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    timestamp: f64,
    ego_pose: [f64; 3],
    agent_start_index: usize,
    agent_end_index: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentRecord {
    track_id: u64,
    centroid: [f64; 2],
    yaw: f64,
    extent: [f64; 2],
    velocity: [f64; 2],
    label: AgentLabel,
}

fn read_records<R: for<'de> Deserialize<'de>>(path: &Path, what: &'static str) -> Result<Vec<R>, FormatError> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| FormatError::Record {
            what,
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, FormatError> {
    if !dir.is_dir() {
        return Err(FormatError::Invalid(format!("{} is not a dataset directory", dir.display())));
    }
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct SceneRecord {
        scene_id: u64,
        host: String,
        frame_start_index: usize,
        frame_end_index: usize,
    }
    let scenes = read_records::<SceneRecord>(&dir.join(SCENES_FILE), SCENES_FILE)?
        .into_iter()
        .map(|r| Scene {
            scene_id: r.scene_id,
            host: r.host,
            frame_start_index: r.frame_start_index,
            frame_end_index: r.frame_end_index,
        })
        .collect();
    let frames = read_records::<FrameRecord>(&dir.join(FRAMES_FILE), FRAMES_FILE)?
        .into_iter()
        .map(|r| Frame {
            timestamp: r.timestamp,
            ego_pose: Pose2::new(r.ego_pose[0], r.ego_pose[1], r.ego_pose[2]),
            agent_start_index: r.agent_start_index,
            agent_end_index: r.agent_end_index,
        })
        .collect();
    let agents = read_records::<AgentRecord>(&dir.join(AGENTS_FILE), AGENTS_FILE)?
        .into_iter()
        .map(|r| Agent {
            track_id: r.track_id,
            centroid: r.centroid,
            yaw: r.yaw,
            extent: r.extent,
            velocity: r.velocity,
            label: r.label,
        })
        .collect();
    let ds = Dataset { scenes, frames, agents };
    ds.validate()?;
    Ok(ds)
}

/// Serializes equally-shaped C×H×W rasters into the `rasters.bin` layout.
pub fn encode_rasters(rasters: &[Tensor<f32>]) -> Result<Vec<u8>, FormatError> {
    let (c, h, w) = match rasters.first().map(|r| r.shape()) {
        Some(&[c, h, w]) => (c, h, w),
        Some(s) => return Err(FormatError::Invalid(format!("raster must be C×H×W, got {s:?}"))),
        None => (0, 0, 0),
    };
    let mut out = Vec::with_capacity(24 + rasters.len() * c * h * w * 4);
    out.extend_from_slice(RASTER_MAGIC);
    for v in [RASTER_VERSION, rasters.len() as u32, c as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for r in rasters {
        if r.shape() != [c, h, w] {
            return Err(FormatError::Invalid(format!(
                "raster shape {:?} differs from {:?}",
                r.shape(),
                [c, h, w]
            )));
        }
        for v in r.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_rasters(bytes: &[u8]) -> Result<Vec<Tensor<f32>>, FormatError> {
    const WHAT: &str = "rasters.bin";
    if bytes.len() < 4 || &bytes[..4] != RASTER_MAGIC {
        return Err(FormatError::Magic {
            what: WHAT,
            expected: "BEVR".into(),
        });
    }
    if bytes.len() < 24 {
        return Err(FormatError::Truncated {
            what: WHAT,
            detail: format!("header needs 24 bytes, file has {}", bytes.len()),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != RASTER_VERSION {
        return Err(FormatError::Version {
            what: WHAT,
            found: version,
            expected: RASTER_VERSION,
        });
    }
    let (count, c, h, w) = (word(1) as usize, word(2) as usize, word(3) as usize, word(4) as usize);
    let per = c * h * w;
    let need = 24 + count * per * 4;
    if bytes.len() != need {
        return Err(FormatError::Truncated {
            what: WHAT,
            detail: format!("expected {need} bytes, file has {}", bytes.len()),
        });
    }
    let floats: Vec<f32> = bytes[24..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    floats
        .chunks(per.max(1))
        .take(count)
        .map(|chunk| {
            Tensor::from_vec(&[c, h, w], chunk.to_vec()).map_err(|e| FormatError::Invalid(e.to_string()))
        })
        .collect()
}

pub fn write_rasters(path: &Path, rasters: &[Tensor<f32>]) -> Result<(), FormatError> {
    fs::write(path, encode_rasters(rasters)?)?;
    Ok(())
}

pub fn read_rasters(path: &Path) -> Result<Vec<Tensor<f32>>, FormatError> {
    decode_rasters(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(24.9), "24.9");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-123.456789012), "-123.456789");
        assert_eq!(format_number(0.000123456789012), "0.000123456789");
        assert_eq!(format_number(1234567890123.0), "1234567890000");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
    }

    #[test]
    fn raster_header_is_exact() {
        let r = Tensor::<f32>::from_fn(&[3, 2, 2], |i| i as f32);
        let bytes = encode_rasters(&[r.clone()]).unwrap();
        assert_eq!(&bytes[..4], b"BEVR");
        assert_eq!(&bytes[4..24], &[1, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(bytes.len(), 24 + 12 * 4);
        assert_eq!(decode_rasters(&bytes).unwrap(), vec![r]);
    }

    #[test]
    fn raster_errors_are_distinct() {
        let r = Tensor::<f32>::zeros(&[3, 2, 2]);
        let good = encode_rasters(&[r]).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_rasters(&bad_magic), Err(FormatError::Magic { .. })));
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(decode_rasters(&bad_version), Err(FormatError::Version { found: 2, .. })));
        assert!(matches!(
            decode_rasters(&good[..good.len() - 1]),
            Err(FormatError::Truncated { .. })
        ));
    }
}
