//! PGM (P5) + YAML map files.
//!
//! Row 0 of the image is the top (north) edge of the map. Pixels encode the
//! thresholded cell state: 0 occupied, 254 free, 205 unknown.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::grid::{Cell, OccupancyGrid, Trinary, FREE_THRESH, OCCUPIED_THRESH};

pub const PIXEL_OCCUPIED: u8 = 0;
pub const PIXEL_FREE: u8 = 254;
pub const PIXEL_UNKNOWN: u8 = 205;

const YAML_KEYS: [&str; 6] = [
    "image",
    "resolution",
    "origin",
    "negate",
    "occupied_thresh",
    "free_thresh",
];

#[derive(Debug, Deserialize)]
struct MapMeta {
    image: String,
    resolution: f64,
    origin: [f64; 3],
    #[serde(default)]
    negate: u8,
    #[serde(default = "default_occ")]
    occupied_thresh: f64,
    #[serde(default = "default_free")]
    free_thresh: f64,
}

fn default_occ() -> f64 {
    OCCUPIED_THRESH
}

fn default_free() -> f64 {
    FREE_THRESH
}

/// Encodes the map as a binary P5 image.
pub fn encode_pgm(map: &OccupancyGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    out.reserve(map.len());
    for row in 0..map.height {
        let iy = (map.height - 1 - row) as i64;
        for ix in 0..map.width as i64 {
            out.push(match map.trinary(Cell::new(ix, iy)) {
                Trinary::Occupied => PIXEL_OCCUPIED,
                Trinary::Free => PIXEL_FREE,
                Trinary::Unknown => PIXEL_UNKNOWN,
            });
        }
    }
    out
}

/// YAML sidecar text for a map whose image file is `image`.
pub fn encode_yaml(map: &OccupancyGrid, image: &str) -> String {
    format!(
        "image: {image}\nresolution: {:?}\norigin: [{:?}, {:?}, {:?}]\nnegate: 0\noccupied_thresh: {OCCUPIED_THRESH:?}\nfree_thresh: {FREE_THRESH:?}\n",
        map.resolution, map.origin.x, map.origin.y, map.origin.yaw
    )
}

/// Writes `<yaml_path>` and the image next to it (same stem, `.pgm`).
pub fn save_map(map: &OccupancyGrid, yaml_path: &Path) -> Result<()> {
    let image_path = yaml_path.with_extension("pgm");
    let image_name = image_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("bad map path {}", yaml_path.display())))?
        .to_string();
    if let Some(dir) = yaml_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&image_path, encode_pgm(map)).map_err(|e| Error::io(&image_path, e))?;
    fs::write(yaml_path, encode_yaml(map, &image_name)).map_err(|e| Error::io(yaml_path, e))?;
    Ok(())
}

struct Pgm {
    width: usize,
    height: usize,
    maxval: u32,
    data: Vec<u8>,
}

fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::map_format("pgm header", "truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::map_format("pgm magic", format!("expected P5, found {magic:?}")));
    }
    let number = |field: &str, pos: &mut usize| -> Result<u32> {
        let tok = next_token(pos)?;
        tok.parse::<u32>()
            .map_err(|_| Error::map_format(field, format!("not an integer: {tok:?}")))
    };
    let width = number("pgm width", &mut pos)? as usize;
    let height = number("pgm height", &mut pos)? as usize;
    let maxval = number("pgm maxval", &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::map_format("pgm maxval", format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let data = bytes.get(pos..).unwrap_or_default().to_vec();
    if data.len() != width * height {
        return Err(Error::map_format(
            "pgm size",
            format!("header says {width}x{height} = {} pixels, found {}", width * height, data.len()),
        ));
    }
    Ok(Pgm { width, height, maxval, data })
}

fn check_keys(text: &str) -> Result<()> {
    let value: serde_yaml::Value = serde_yaml::from_str(text)?;
    let map = value
        .as_mapping()
        .ok_or_else(|| Error::map_format("yaml", "top level is not a mapping"))?;
    for key in map.keys() {
        let k = key.as_str().unwrap_or("<non-string key>");
        if !YAML_KEYS.contains(&k) {
            return Err(Error::map_format(k, "unknown key"));
        }
    }
    for required in ["image", "resolution", "origin"] {
        if !map.contains_key(required) {
            return Err(Error::map_format(required, "missing key"));
        }
    }
    Ok(())
}

/// Loads a map from its YAML sidecar; the image path is resolved relative to it.
pub fn load_map(yaml_path: &Path) -> Result<OccupancyGrid> {
    let text = fs::read_to_string(yaml_path).map_err(|e| Error::io(yaml_path, e))?;
    check_keys(&text)?;
    let meta: MapMeta = serde_yaml::from_str(&text)?;
    if !(meta.resolution.is_finite() && meta.resolution > 0.0) {
        return Err(Error::map_format("resolution", "must be positive"));
    }
    if !meta.origin.iter().all(|v| v.is_finite()) {
        return Err(Error::map_format("origin", "must be finite"));
    }
    if meta.negate > 1 {
        return Err(Error::map_format("negate", "must be 0 or 1"));
    }
    let image_path: PathBuf = match yaml_path.parent() {
        Some(dir) => dir.join(&meta.image),
        None => PathBuf::from(&meta.image),
    };
    let bytes = fs::read(&image_path).map_err(|e| Error::io(&image_path, e))?;
    let pgm = parse_pgm(&bytes)?;
    let origin = Pose2::new(meta.origin[0], meta.origin[1], meta.origin[2]);
    let mut map = OccupancyGrid::new(pgm.width, pgm.height, meta.resolution, origin)?;
    for row in 0..pgm.height {
        let iy = (pgm.height - 1 - row) as i64;
        for ix in 0..pgm.width {
            let v = pgm.data[row * pgm.width + ix] as f64 / pgm.maxval as f64;
            let p = if meta.negate == 1 { v } else { 1.0 - v };
            let c = Cell::new(ix as i64, iy);
            if p > meta.occupied_thresh {
                map.set_occupied(c);
            } else if p < meta.free_thresh {
                map.set_free(c);
            }
        }
    }
    Ok(map)
}
